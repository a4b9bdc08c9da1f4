#include "mmrkit/loco.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "mmrkit/error.hpp"
#include "mmrkit/local_fit.hpp"
#include "mmrkit/rng.hpp"

namespace mmr {

namespace {

void check_binary(const Vector& y, const char* who) {
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y[i] != 0.0 && y[i] != 1.0) throw DataError(std::string(who) + ": response must be 0/1");
}

}  // namespace

std::optional<double> auroc(const Vector& score, const Vector& y) {
  if (score.size() != y.size()) throw DimensionError("auroc: length mismatch");
  check_binary(y, "auroc");
  const Eigen::Index n = y.size();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return score[a] < score[b]; });
  double rank_sum = 0.0;
  double n_pos = 0.0;
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i;
    while (j + 1 < n && score[idx[static_cast<std::size_t>(j + 1)]] == score[idx[static_cast<std::size_t>(i)]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index t = i; t <= j; ++t)
      if (y[idx[static_cast<std::size_t>(t)]] == 1.0) {
        rank_sum += midrank;
        n_pos += 1.0;
      }
    i = j + 1;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) return std::nullopt;
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

double brier(const Vector& prob, const Vector& y) {
  if (prob.size() != y.size() || y.size() == 0) throw DimensionError("brier: length mismatch or empty");
  check_binary(y, "brier");
  return (prob - y).squaredNorm() / static_cast<double>(y.size());
}

double brier_se(const Vector& prob, const Vector& y) {
  const double m = brier(prob, y);
  const Eigen::Index n = y.size();
  if (n < 2) return 0.0;
  const Eigen::ArrayXd e = (prob - y).array().square();
  return std::sqrt((e - m).square().sum() / static_cast<double>(n - 1) / static_cast<double>(n));
}

const LocoSummary* LocoReport::find(std::string_view method) const {
  for (const LocoSummary& s : summary)
    if (s.method == method) return &s;
  return nullptr;
}

namespace {

GroupSample rows_of(const GroupSample& g, const std::vector<Eigen::Index>& rows, const std::string& id) {
  GroupSample s;
  s.group_id = id;
  s.X.resize(static_cast<Eigen::Index>(rows.size()), g.p());
  s.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s.X.row(static_cast<Eigen::Index>(i)) = g.X.row(rows[i]);
    s.y[static_cast<Eigen::Index>(i)] = g.y[rows[i]];
  }
  return s;
}

Vector predict(const GroupSample& test, const Vector& theta) {
  const GlmFamily logit(FamilyTag::logistic);
  const Vector eta = test.X * theta;
  Vector p(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) p[i] = logit.mean(eta[i]);
  return p;
}

}  // namespace

LocoReport loco_harness(const GroupedDataset& data, const LocoOptions& opts) {
  if (data.K() < 2) throw InputError("loco_harness: need at least two groups");
  if (!(opts.split_ratio > 0.0 && opts.split_ratio < 1.0)) throw InputError("loco_harness: split_ratio must lie in (0, 1)");
  if (opts.replications < 1) throw InputError("loco_harness: replications must be positive");
  validate_options(opts.solver);
  for (const GroupSample& g : data.groups()) check_binary(g.y, "loco_harness");
  const LossSpec loss = LossSpec::glm(GlmFamily(FamilyTag::logistic));

  LocoReport rep;
  for (int r = 0; r < opts.replications; ++r) {
    for (std::size_t h = 0; h < data.K(); ++h) {
      const GroupSample& held = data.group(h);
      std::vector<Eigen::Index> perm(static_cast<std::size_t>(held.n()));
      std::iota(perm.begin(), perm.end(), Eigen::Index{0});
      Rng rng(opts.seed, {static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(h)});
      std::shuffle(perm.begin(), perm.end(), rng.engine());
      const std::size_t n_train = static_cast<std::size_t>(std::floor(opts.split_ratio * static_cast<double>(perm.size())));
      const std::vector<Eigen::Index> tr(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
      const std::vector<Eigen::Index> te(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
      const GroupSample train = rows_of(held, tr, held.group_id + ":train");
      const GroupSample test = rows_of(held, te, held.group_id + ":test");

      auto score = [&](const std::string& name, const Vector& theta) {
        LocoCell c{held.group_id, r, name, std::nullopt, std::nullopt, ""};
        const Vector prob = predict(test, theta);
        c.auroc = auroc(prob, test.y);
        c.brier = brier(prob, test.y);
        if (!c.auroc) c.error = "single class in test split";
        rep.cells.push_back(std::move(c));
      };
      auto fail = [&](const std::string& name, const std::string& what) {
        rep.cells.push_back({held.group_id, r, name, std::nullopt, std::nullopt, what});
      };

      const GroupedDataset rest = data.without(h);
      for (Method m : opts.methods) {
        try {
          score(std::string(method_name(m)), fit_method(m, rest, loss, opts.solver).theta_hat);
        } catch (const Error& e) {
          fail(std::string(method_name(m)), e.what());
        }
      }
      try {
        score("within", glm_newton(train, GlmFamily(FamilyTag::logistic)).beta_hat);
      } catch (const Error& e) {
        fail("within", e.what());
      }
    }
  }

  std::vector<std::string> order;
  for (Method m : opts.methods) order.emplace_back(method_name(m));
  order.emplace_back("within");
  for (const std::string& name : order) {
    LocoSummary s;
    s.method = name;
    double sa = 0.0, sb = 0.0;
    for (const LocoCell& c : rep.cells) {
      if (c.method != name) continue;
      if (c.auroc) {
        sa += *c.auroc;
        ++s.auroc_count;
      }
      if (c.brier) {
        sb += *c.brier;
        ++s.brier_count;
      }
    }
    s.mean_auroc = s.auroc_count ? sa / s.auroc_count : std::nan("");
    s.mean_brier = s.brier_count ? sb / s.brier_count : std::nan("");
    rep.summary.push_back(std::move(s));
  }
  return rep;
}

}  // namespace mmr
