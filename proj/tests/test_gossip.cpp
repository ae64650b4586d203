#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "gcml/gossip.hpp"

using namespace gcml;

TEST_CASE("a partial matching uses each site at most once") {
  RngStream rng(31, 1);
  for (int t = 0; t < 200; ++t) {
    const auto s = select_pairs({0, 1, 2, 3, 4, 5, 6, 7}, 1 + t % 4, rng);
    CHECK(s.pairs.size() == static_cast<std::size_t>(1 + t % 4));
    std::set<SiteId> used;
    for (const auto& p : s.pairs) {
      CHECK(p.sender != p.receiver);
      CHECK(used.insert(p.sender).second);
      CHECK(used.insert(p.receiver).second);
    }
  }
}

TEST_CASE("odd site count: the leftover receives from a matched sender") {
  RngStream rng(32, 2);
  std::map<SiteId, int> second_senders;
  for (int t = 0; t < 600; ++t) {
    const auto s = select_pairs({0, 1, 2, 3, 4}, 3, rng);
    REQUIRE(s.pairs.size() == 3);
    std::set<SiteId> receivers;
    for (const auto& p : s.pairs) CHECK(receivers.insert(p.receiver).second);
    const auto& extra = s.pairs.back();
    CHECK((extra.sender == s.pairs[0].sender || extra.sender == s.pairs[1].sender));
    // All five sites take part.
    std::set<SiteId> all;
    for (const auto& p : s.pairs) {
      all.insert(p.sender);
      all.insert(p.receiver);
    }
    CHECK(all.size() == 5);
    ++second_senders[extra.sender];
  }
  CHECK(second_senders.size() == 5);
}

TEST_CASE("extra pairs respect max_incoming") {
  RngStream rng(33, 3);
  const auto s = select_pairs({0, 1, 2, 3}, 6, rng, 2);
  CHECK(s.pairs.size() == 6);
  std::map<SiteId, int> incoming;
  for (const auto& p : s.pairs) {
    CHECK(p.sender != p.receiver);
    ++incoming[p.receiver];
  }
  for (auto [site, n] : incoming) CHECK(n <= 2);
  CHECK_THROWS_AS(select_pairs({0, 1, 2, 3}, 5, rng, 1), Error);
}

TEST_CASE("fewer than two sites is an error") {
  RngStream rng(34, 4);
  CHECK_THROWS_WITH_AS(select_pairs({3}, 1, rng), "insufficient sites", Error);
  CHECK_THROWS_AS(select_pairs({}, 1, rng), Error);
  CHECK_THROWS_AS(select_pairs({2, 2}, 1, rng), Error);
  CHECK_THROWS_AS(select_pairs({0, 1}, 0, rng), Error);
}

TEST_CASE("pairings of four sites into two pairs are uniform") {
  RngStream rng(35, 5);
  std::map<std::vector<std::pair<SiteId, SiteId>>, int> freq;
  const int n = 10000;
  for (int t = 0; t < n; ++t) {
    const auto s = select_pairs({1, 2, 3, 4}, 2, rng);
    std::vector<std::pair<SiteId, SiteId>> key;
    for (const auto& p : s.pairs) key.emplace_back(p.sender, p.receiver);
    std::sort(key.begin(), key.end());
    ++freq[key];
  }
  // 4! orderings / 2! pair orders = 12 directed matchings.
  CHECK(freq.size() == 12);
  const double p = 1.0 / 12.0;
  const double sigma = std::sqrt(n * p * (1.0 - p));
  for (const auto& [key, count] : freq) CHECK(std::abs(count - n * p) <= 3.0 * sigma);
}

TEST_CASE("scheduler follows availability and is deterministic") {
  GossipScheduler a({0, 1, 2, 3, 4, 5}, RngStream(7, 1));
  GossipScheduler b({0, 1, 2, 3, 4, 5}, RngStream(7, 1));
  a.mark_availability(2, false, 1);
  b.mark_availability(2, false, 1);
  for (int r = 1; r <= 20; ++r) {
    const auto sa = a.next_round(r, 2), sb = b.next_round(r, 2);
    CHECK(sa == sb);
    for (const auto& p : sa.pairs) CHECK((p.sender != 2 && p.receiver != 2));
  }
  CHECK_FALSE(a.is_available(2));
  CHECK(a.available_sites() == std::vector<SiteId>{0, 1, 3, 4, 5});
  CHECK(a.events().size() == 1);
  CHECK_THROWS_AS(a.mark_availability(9, true, 1), Error);
}

TEST_CASE("a mid-round departure drops the pairs touching that site") {
  GossipScheduler s({0, 1, 2, 3}, RngStream(8, 1));
  auto sched = s.next_round(1, 2);
  const SiteId gone = sched.pairs[0].receiver;
  CHECK(s.depart_mid_round(sched, gone) == 1);
  CHECK(sched.pairs.size() == 1);
  CHECK_FALSE(s.is_available(gone));
  CHECK(s.events().size() == 2);
}

TEST_CASE("schedule trace lines") {
  PairSchedule s{3, {{1, 2}, {4, 0}}};
  CHECK(schedule_trace(s) == std::vector<std::string>{"3,1,2", "3,4,0"});
  CHECK(s.incoming(2) == std::vector<SiteId>{1});
  CHECK(s.incoming(1).empty());
}
