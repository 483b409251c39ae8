#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "czsl/data.hpp"

// Split-directory fixtures shared by the data suite and the acceptance suite.

namespace czsl::testutil {

struct SplitCounts {
  int attrs, objs, train, val_seen, val_unseen, test_seen, test_unseen;
};

// MIT-States split statistics: 115/245 primitives, 1262 train pairs,
// 300+300 val pairs, 400+400 test pairs.
inline SplitCounts mit_states_counts() { return {115, 245, 1262, 300, 300, 400, 400}; }

// UT-Zappos split statistics.
inline SplitCounts ut_zappos_counts() { return {16, 12, 83, 15, 15, 18, 18}; }

// Writes a split directory with the requested counts using synthetic names.
// Train pairs walk the diagonal enumeration (i mod attrs, (i mod attrs +
// i / attrs) mod objs), collision-free until the grid is exhausted; unseen
// pairs are the first free cells of the attr-major grid.
inline void write_split_fixture(const std::string& dir, const SplitCounts& c) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto attr_name = [](int a) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fixattr%03d", a);
    return std::string(buf);
  };
  auto obj_name = [](int o) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fixobj%03d", o);
    return std::string(buf);
  };

  std::vector<std::pair<int, int>> train;
  std::set<std::pair<int, int>> train_set;
  for (int i = 0; i < c.train; ++i) {
    const int a = i % c.attrs;
    const std::pair<int, int> p{a, (a + i / c.attrs) % c.objs};
    train.push_back(p);
    train_set.insert(p);
  }
  std::vector<std::pair<int, int>> unseen;
  for (int a = 0; a < c.attrs && static_cast<int>(unseen.size()) <
                                     c.val_unseen + c.test_unseen; ++a)
    for (int o = 0; o < c.objs && static_cast<int>(unseen.size()) <
                                      c.val_unseen + c.test_unseen; ++o)
      if (!train_set.count({a, o})) unseen.emplace_back(a, o);

  auto write_pairs = [&](const char* fname,
                         const std::vector<std::pair<int, int>>& pairs) {
    std::ofstream os((fs::path(dir) / fname).string());
    for (const auto& [a, o] : pairs)
      os << attr_name(a) << " " << obj_name(o) << "\n";
  };
  write_pairs("train_pairs.txt", train);
  write_pairs("val_seen_pairs.txt",
              {train.begin(), train.begin() + c.val_seen});
  write_pairs("test_seen_pairs.txt",
              {train.begin() + c.val_seen,
               train.begin() + c.val_seen + c.test_seen});
  write_pairs("val_unseen_pairs.txt",
              {unseen.begin(), unseen.begin() + c.val_unseen});
  write_pairs("test_unseen_pairs.txt",
              {unseen.begin() + c.val_unseen,
               unseen.begin() + c.val_unseen + c.test_unseen});

  std::ofstream ms((fs::path(dir) / "samples.txt").string());
  int img = 0;
  auto sample = [&](const std::pair<int, int>& p, const char* split) {
    ms << "img" << img++ << " " << attr_name(p.first) << " "
       << obj_name(p.second) << " " << split << "\n";
  };
  sample(train[0], "train");
  sample(train[1], "train");
  sample(train[0], "val");
  sample(unseen[0], "val");
  sample(train[c.val_seen], "test");
  sample(unseen[static_cast<std::size_t>(c.val_unseen)], "test");
}

}  // namespace czsl::testutil
