#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "gcml/data.hpp"
#include "gcml/numerics.hpp"

namespace gcml {

struct ModelTransfer {
  SiteId sender = 0;
  SiteId receiver = 0;
  friend bool operator==(const ModelTransfer&, const ModelTransfer&) = default;
};

/// One round's sender -> receiver pairs. A receiver listed several times
/// processes its incoming models in list order.
struct PairSchedule {
  int round = 0;
  std::vector<ModelTransfer> pairs;

  /// Senders for `receiver` in processing order.
  std::vector<SiteId> incoming(SiteId receiver) const;
  friend bool operator==(const PairSchedule&, const PairSchedule&) = default;
};

/// Random pairing over `available`.
///  - 2 * num_pairs <= |available|: a uniform partial matching; every site
///    used at most once.
///  - |available| odd and num_pairs == ceil(|available| / 2): the leftover
///    site receives from one of the matched senders, chosen uniformly.
///  - beyond that, extra pairs pick a receiver with spare capacity
///    (< max_incoming) and any other site as sender.
/// Throws Error("insufficient sites") when fewer than two sites are available.
PairSchedule select_pairs(std::vector<SiteId> available, int num_pairs,
                          RngStream& rng, int max_incoming = 1, int round = 0);

/// Holds the availability set and the scheduler's RNG stream for one run.
class GossipScheduler {
 public:
  GossipScheduler(std::vector<SiteId> sites, RngStream rng, int max_incoming = 1);

  /// Takes effect for every later next_round() call. Unknown sites throw.
  void mark_availability(SiteId site, bool available, int round);
  bool is_available(SiteId site) const;
  std::vector<SiteId> available_sites() const;

  PairSchedule next_round(int round, int num_pairs);

  /// Removes the site mid-round: drops every pair touching it from
  /// `schedule` and marks it unavailable. Returns the number of pairs dropped.
  std::size_t depart_mid_round(PairSchedule& schedule, SiteId site);

  const std::vector<std::string>& events() const { return events_; }

 private:
  std::map<SiteId, bool> available_;
  RngStream rng_;
  int max_incoming_;
  std::vector<std::string> events_;
};

/// "round,sender,receiver" per pair.
std::vector<std::string> schedule_trace(const PairSchedule& schedule);

}  // namespace gcml
