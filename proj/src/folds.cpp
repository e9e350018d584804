#include "airfuse/folds.hpp"

#include <numeric>

#include "airfuse/csv.hpp"
#include "airfuse/rng.hpp"

namespace airfuse {

std::vector<int> FoldPlan::held_out(int fold) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(fold_of_site.size()); ++i) {
    if (fold_of_site[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<int> FoldPlan::training(int fold) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(fold_of_site.size()); ++i) {
    if (fold_of_site[i] != fold) out.push_back(i);
  }
  return out;
}

FoldPlan make_site_folds(int n_sites, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("fold plan: k must be at least 2");
  if (n_sites < k) throw ConfigError("fold plan: need at least k sites");

  std::vector<int> order(n_sites);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0xF01D));
  rng.shuffle(order);

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.fold_of_site.assign(n_sites, -1);
  // first (n mod k) folds take the extra site
  const int base = n_sites / k;
  const int extra = n_sites % k;
  int pos = 0;
  for (int f = 0; f < k; ++f) {
    const int size = base + (f < extra ? 1 : 0);
    for (int j = 0; j < size; ++j) plan.fold_of_site[order[pos++]] = f;
  }
  return plan;
}

void write_foldplan_csv(const std::string& path, const FoldPlan& plan, const MonitorDataset& data) {
  if (static_cast<int>(plan.fold_of_site.size()) != data.n_sites()) {
    throw InvalidArgument("fold plan does not match dataset");
  }
  CsvWriter w(path);
  w.raw_line("site_id,fold");
  for (int i = 0; i < data.n_sites(); ++i) {
    w.row({data.site(i).id, std::to_string(plan.fold_of_site[i])});
  }
}

FoldPlan read_foldplan_csv(const std::string& path, const MonitorDataset& data) {
  CsvReader reader(path);
  std::vector<std::string> f;
  if (!reader.next(f) || f.size() != 2 || f[0] != "site_id" || f[1] != "fold") {
    reader.fail("expected header site_id,fold");
  }
  FoldPlan plan;
  plan.fold_of_site.assign(data.n_sites(), -1);
  int max_fold = -1;
  while (reader.next(f)) {
    if (f.size() != 2) reader.fail("expected 2 fields");
    const auto site = data.find_site(f[0]);
    if (!site) reader.fail("unknown site id '" + f[0] + "'");
    const int fold = static_cast<int>(reader.parse_long(f[1], "fold"));
    if (fold < 0) reader.fail("negative fold index");
    if (plan.fold_of_site[*site] != -1) reader.fail("duplicate site id '" + f[0] + "'");
    plan.fold_of_site[*site] = fold;
    max_fold = std::max(max_fold, fold);
  }
  // sites absent from the file keep fold -1: they were never held out
  plan.k = max_fold + 1;
  return plan;
}

}  // namespace airfuse
