#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "airfuse/dataset.hpp"

namespace airfuse {

// Site-level cross-validation plan: folds partition the sites, all days of a
// held-out site are predicted from the remaining sites.
struct FoldPlan {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<int> fold_of_site;  // one entry per site index

  std::vector<int> held_out(int fold) const;
  std::vector<int> training(int fold) const;
};

// Deterministic shuffle by seed, then a partition into k near-equal parts
// (sizes differ by at most one, larger folds first).
FoldPlan make_site_folds(int n_sites, int k, std::uint64_t seed);

void write_foldplan_csv(const std::string& path, const FoldPlan& plan, const MonitorDataset& data);
FoldPlan read_foldplan_csv(const std::string& path, const MonitorDataset& data);

}  // namespace airfuse
