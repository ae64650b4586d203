#include "gcml/gossip.hpp"

#include <algorithm>

namespace gcml {

std::vector<SiteId> PairSchedule::incoming(SiteId receiver) const {
  std::vector<SiteId> out;
  for (const auto& p : pairs) {
    if (p.receiver == receiver) out.push_back(p.sender);
  }
  return out;
}

PairSchedule select_pairs(std::vector<SiteId> available, int num_pairs,
                          RngStream& rng, int max_incoming, int round) {
  std::sort(available.begin(), available.end());
  available.erase(std::unique(available.begin(), available.end()), available.end());
  if (available.size() < 2) throw Error("insufficient sites");
  if (num_pairs < 1) throw Error("select_pairs: num_pairs must be >= 1");
  if (max_incoming < 1) throw Error("select_pairs: max_incoming must be >= 1");

  const std::size_t n = available.size();
  std::vector<SiteId> perm = available;
  rng.shuffle(perm);

  PairSchedule schedule;
  schedule.round = round;
  const std::size_t wanted = static_cast<std::size_t>(num_pairs);
  const std::size_t matched = std::min(wanted, n / 2);
  for (std::size_t i = 0; i < matched; ++i) {
    schedule.pairs.push_back({perm[2 * i], perm[2 * i + 1]});
  }

  // Odd leftover receives from one of the matched senders.
  if (schedule.pairs.size() < wanted && n % 2 == 1) {
    const auto pick = static_cast<std::size_t>(rng.next_below(matched));
    schedule.pairs.push_back({perm[2 * pick], perm[n - 1]});
  }

  std::map<SiteId, int> received;
  for (const auto& p : schedule.pairs) ++received[p.receiver];
  while (schedule.pairs.size() < wanted) {
    std::vector<SiteId> open;
    for (SiteId s : available) {
      if (received[s] < max_incoming) open.push_back(s);
    }
    if (open.empty()) {
      throw Error("select_pairs: " + std::to_string(num_pairs) +
                  " pairs exceed receiver capacity of " + std::to_string(n) +
                  " sites x " + std::to_string(max_incoming));
    }
    const SiteId receiver = open[rng.next_below(open.size())];
    std::vector<SiteId> senders;
    const auto already = schedule.incoming(receiver);
    for (SiteId s : available) {
      if (s != receiver && std::find(already.begin(), already.end(), s) == already.end()) {
        senders.push_back(s);
      }
    }
    if (senders.empty()) {
      for (SiteId s : available) {
        if (s != receiver) senders.push_back(s);
      }
    }
    schedule.pairs.push_back({senders[rng.next_below(senders.size())], receiver});
    ++received[receiver];
  }
  return schedule;
}

GossipScheduler::GossipScheduler(std::vector<SiteId> sites, RngStream rng,
                                 int max_incoming)
    : rng_(rng), max_incoming_(max_incoming) {
  for (SiteId s : sites) available_[s] = true;
}

void GossipScheduler::mark_availability(SiteId site, bool available, int round) {
  auto it = available_.find(site);
  if (it == available_.end()) {
    throw Error("mark_availability: unknown site " + std::to_string(site));
  }
  if (it->second != available) {
    events_.push_back("round " + std::to_string(round) + ": site " + std::to_string(site) +
                      (available ? " joined" : " left"));
  }
  it->second = available;
}

bool GossipScheduler::is_available(SiteId site) const {
  auto it = available_.find(site);
  if (it == available_.end()) throw Error("unknown site " + std::to_string(site));
  return it->second;
}

std::vector<SiteId> GossipScheduler::available_sites() const {
  std::vector<SiteId> out;
  for (auto [id, up] : available_) {
    if (up) out.push_back(id);
  }
  return out;
}

PairSchedule GossipScheduler::next_round(int round, int num_pairs) {
  return select_pairs(available_sites(), num_pairs, rng_, max_incoming_, round);
}

std::size_t GossipScheduler::depart_mid_round(PairSchedule& schedule, SiteId site) {
  mark_availability(site, false, schedule.round);
  const auto before = schedule.pairs.size();
  std::erase_if(schedule.pairs, [&](const ModelTransfer& p) {
    const bool hit = p.sender == site || p.receiver == site;
    if (hit) {
      events_.push_back("round " + std::to_string(schedule.round) + ": dropped pair " +
                        std::to_string(p.sender) + "->" + std::to_string(p.receiver) +
                        " (site " + std::to_string(site) + " departed)");
    }
    return hit;
  });
  return before - schedule.pairs.size();
}

std::vector<std::string> schedule_trace(const PairSchedule& schedule) {
  std::vector<std::string> out;
  for (const auto& p : schedule.pairs) {
    out.push_back(std::to_string(schedule.round) + "," + std::to_string(p.sender) + "," +
                  std::to_string(p.receiver));
  }
  return out;
}

}  // namespace gcml
