#include "fixaudit/dapo.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "fixaudit/error.hpp"
#include "fixaudit/util.hpp"

namespace fixaudit {

std::string_view to_string(Role r) {
  switch (r) {
    case Role::Base: return "base";
    case Role::FixerR1: return "fixer_r1";
    case Role::Auditor: return "auditor";
    case Role::FixerR2: return "fixer_r2";
    case Role::SftTeacher: return "sft_teacher";
  }
  return "unknown";
}

Role role_from_string(std::string_view name) {
  for (Role r : {Role::Base, Role::FixerR1, Role::Auditor, Role::FixerR2, Role::SftTeacher}) {
    if (to_string(r) == name) return r;
  }
  throw ContractError("unknown role '" + std::string(name) + "'");
}

void SampleGroup::validate() const {
  if (rewards.size() != responses.size()) throw ContractError("sample group: rewards and responses differ in length");
  if (logp_new && logp_new->size() != rewards.size()) throw ContractError("sample group: logp_new length mismatch");
  if (logp_old && logp_old->size() != rewards.size()) throw ContractError("sample group: logp_old length mismatch");
}

nlohmann::ordered_json SampleGroup::to_json() const {
  nlohmann::ordered_json o;
  o["group_id"] = group_id;
  o["problem_id"] = problem_id;
  o["role"] = to_string(role);
  o["prompt"] = prompt;
  o["responses"] = responses;
  o["rewards"] = rewards;
  if (logp_new) o["logp_new"] = *logp_new;
  if (logp_old) o["logp_old"] = *logp_old;
  return o;
}

SampleGroup SampleGroup::from_json(const nlohmann::json& j) {
  SampleGroup g;
  g.group_id = j.at("group_id").get<std::string>();
  g.problem_id = j.at("problem_id").get<std::string>();
  g.role = role_from_string(j.at("role").get<std::string>());
  g.prompt = j.at("prompt").get<std::string>();
  g.responses = j.at("responses").get<std::vector<std::string>>();
  g.rewards = j.at("rewards").get<std::vector<double>>();
  if (j.contains("logp_new")) g.logp_new = j.at("logp_new").get<std::vector<double>>();
  if (j.contains("logp_old")) g.logp_old = j.at("logp_old").get<std::vector<double>>();
  g.validate();
  return g;
}

void ClipBounds::validate() const {
  if (!(eps_low > 0.0) || !std::isfinite(eps_low)) throw ContractError("eps_low must be > 0");
  if (!(eps_high > 0.0) || !std::isfinite(eps_high)) throw ContractError("eps_high must be > 0");
}

std::vector<double> group_advantages(std::span<const double> rewards, double epsilon) {
  if (rewards.size() < 2) throw ContractError("group advantages need at least 2 rewards");
  if (!(epsilon >= 0.0)) throw ContractError("epsilon must be >= 0");
  for (double r : rewards) {
    if (!std::isfinite(r)) throw ContractError("rewards must be finite");
  }
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double stddev = std::sqrt(var / n);
  std::vector<double> adv(rewards.size(), 0.0);
  const double denom = stddev + epsilon;
  if (stddev == 0.0 || !(denom > 0.0)) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / denom;
  return adv;
}

double probability_ratio(double logp_new, double logp_old) {
  if (!std::isfinite(logp_new) || !std::isfinite(logp_old)) throw ContractError("log-probabilities must be finite");
  return std::exp(logp_new - logp_old);
}

namespace {

void require_parallel(std::span<const double> ratios, std::span<const double> advantages) {
  if (ratios.size() != advantages.size()) throw ContractError("ratios and advantages differ in length");
  if (ratios.empty()) throw ContractError("objective needs at least one sample");
}

}  // namespace

double dapo_objective(std::span<const double> ratios, std::span<const double> advantages, const ClipBounds& bounds) {
  bounds.validate();
  require_parallel(ratios, advantages);
  double total = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double clipped = std::clamp(ratios[i], 1.0 - bounds.eps_low, 1.0 + bounds.eps_high);
    total += std::min(ratios[i] * advantages[i], clipped * advantages[i]);
  }
  return total / static_cast<double>(ratios.size());
}

std::vector<double> dapo_objective_logp_gradient(std::span<const double> ratios, std::span<const double> advantages,
                                                 const ClipBounds& bounds) {
  bounds.validate();
  require_parallel(ratios, advantages);
  const double n = static_cast<double>(ratios.size());
  std::vector<double> grad(ratios.size(), 0.0);
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double r = ratios[i];
    const double a = advantages[i];
    const double clipped = std::clamp(r, 1.0 - bounds.eps_low, 1.0 + bounds.eps_high);
    // d r / d logp_new = r; the clipped branch is constant in r.
    if (r * a <= clipped * a) grad[i] = a * r / n;
  }
  return grad;
}

std::vector<SampleGroup> filter_uniform_reward_groups(std::vector<SampleGroup> groups) {
  std::vector<SampleGroup> kept;
  for (auto& g : groups) {
    const bool uniform =
        std::adjacent_find(g.rewards.begin(), g.rewards.end(), std::not_equal_to<>()) == g.rewards.end();
    if (!uniform) kept.push_back(std::move(g));
  }
  return kept;
}

nlohmann::ordered_json TrainingRecord::to_json() const {
  nlohmann::ordered_json o;
  o["problem_id"] = problem_id;
  o["role"] = to_string(role);
  o["prompt"] = prompt;
  o["response"] = response;
  o["reward"] = reward;
  o["group_id"] = group_id;
  o["advantage"] = advantage;
  return o;
}

std::vector<TrainingRecord> build_training_records(std::span<const SampleGroup> groups, double epsilon) {
  std::vector<TrainingRecord> records;
  for (const auto& g : groups) {
    g.validate();
    if (g.rewards.size() < 2) continue;
    const auto adv = group_advantages(g.rewards, epsilon);
    for (std::size_t i = 0; i < g.rewards.size(); ++i) {
      records.push_back({g.problem_id, g.role, g.prompt, g.responses[i], g.rewards[i], g.group_id, adv[i]});
    }
  }
  return records;
}

void write_training_records(std::span<const TrainingRecord> records, std::ostream& out) {
  for (const auto& r : records) out << r.to_json().dump() << '\n';
}

void write_sample_groups(std::span<const SampleGroup> groups, std::ostream& out) {
  for (const auto& g : groups) out << g.to_json().dump() << '\n';
}

std::vector<SampleGroup> read_sample_groups(std::istream& in) {
  std::vector<SampleGroup> groups;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      groups.push_back(SampleGroup::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error("sample groups line " + std::to_string(n) + ": " + e.what());
    }
  }
  return groups;
}

namespace {

/// Symmetric clipped surrogate written per advantage sign, independent of the
/// min/clamp formulation above.
double symmetric_surrogate(std::span<const double> ratios, std::span<const double> advantages, double eps) {
  double total = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double a = advantages[i];
    const double r = ratios[i];
    if (a >= 0.0) {
      total += a * (r > 1.0 + eps ? 1.0 + eps : r);
    } else {
      total += a * (r < 1.0 - eps ? 1.0 - eps : r);
    }
  }
  return total / static_cast<double>(ratios.size());
}

std::string fmt_double(double v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << std::scientific << v;
  return ss.str();
}

}  // namespace

std::vector<InvariantCheck> run_dapo_invariant_suite(std::uint64_t seed, const ClipBounds& bounds,
                                                     std::size_t instances) {
  bounds.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> group_size(2, 16);
  std::vector<InvariantCheck> checks;

  {
    InvariantCheck c{"advantage_zero_sum", true, {}};
    double worst = 0.0;
    for (std::size_t t = 0; t < instances; ++t) {
      const int n = group_size(rng);
      std::vector<double> rewards(static_cast<std::size_t>(n));
      for (auto& r : rewards) r = (t % 2 == 0) ? static_cast<double>(rng() % 3) : 2.0 * unit(rng);
      const auto adv = group_advantages(rewards);
      const double sum = std::accumulate(adv.begin(), adv.end(), 0.0);
      worst = std::max(worst, std::fabs(sum) / n);
      if (std::fabs(sum) > 1e-9 * n) c.passed = false;
    }
    c.detail = "max |sum|/N = " + fmt_double(worst);
    checks.push_back(std::move(c));
  }

  {
    InvariantCheck c{"symmetric_clip_reduction", true, {}};
    double worst = 0.0;
    const ClipBounds sym{0.2, 0.2};
    for (std::size_t t = 0; t < instances; ++t) {
      const int n = group_size(rng);
      std::vector<double> ratios, adv;
      for (int i = 0; i < n; ++i) {
        ratios.push_back(probability_ratio(-2.0 * unit(rng), -2.0 * unit(rng)));
        adv.push_back(4.0 * unit(rng) - 2.0);
      }
      const double diff = std::fabs(dapo_objective(ratios, adv, sym) - symmetric_surrogate(ratios, adv, 0.2));
      worst = std::max(worst, diff);
      if (diff > 1e-12) c.passed = false;
    }
    c.detail = "max |diff| = " + fmt_double(worst);
    checks.push_back(std::move(c));
  }

  {
    InvariantCheck c{"permutation_invariance", true, {}};
    double worst = 0.0;
    for (std::size_t t = 0; t < instances; ++t) {
      const int n = group_size(rng);
      std::vector<std::pair<double, double>> pairs;
      for (int i = 0; i < n; ++i) pairs.emplace_back(0.5 + unit(rng), 4.0 * unit(rng) - 2.0);
      auto objective = [&](const std::vector<std::pair<double, double>>& ps) {
        std::vector<double> r, a;
        for (const auto& [x, y] : ps) {
          r.push_back(x);
          a.push_back(y);
        }
        return dapo_objective(r, a, bounds);
      };
      const double before = objective(pairs);
      stable_shuffle(pairs, rng);
      const double diff = std::fabs(before - objective(pairs));
      worst = std::max(worst, diff);
      if (diff > 1e-12) c.passed = false;
    }
    c.detail = "max |diff| = " + fmt_double(worst);
    checks.push_back(std::move(c));
  }

  {
    InvariantCheck c{"finite_difference_gradient", true, {}};
    double worst = 0.0;
    constexpr double h = 1e-6;
    for (std::size_t t = 0; t < instances; ++t) {
      const int n = group_size(rng);
      std::vector<double> logp_new, logp_old, adv;
      for (int i = 0; i < n; ++i) {
        logp_old.push_back(-10.0 * unit(rng) - 0.1);
        // keep log-ratio strictly inside the clip region with margin
        const double lo = std::log(1.0 - bounds.eps_low) * 0.9;
        const double hi = std::log(1.0 + bounds.eps_high) * 0.9;
        logp_new.push_back(logp_old.back() + lo + (hi - lo) * unit(rng));
        double a = 4.0 * unit(rng) - 2.0;
        if (std::fabs(a) < 0.05) a = 0.5;
        adv.push_back(a);
      }
      auto ratios_of = [&](const std::vector<double>& lp) {
        std::vector<double> r;
        for (int i = 0; i < n; ++i) r.push_back(probability_ratio(lp[i], logp_old[i]));
        return r;
      };
      const auto grad = dapo_objective_logp_gradient(ratios_of(logp_new), adv, bounds);
      const std::size_t k = static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(n));
      auto plus = logp_new;
      auto minus = logp_new;
      plus[k] += h;
      minus[k] -= h;
      const double numeric =
          (dapo_objective(ratios_of(plus), adv, bounds) - dapo_objective(ratios_of(minus), adv, bounds)) / (2.0 * h);
      const double rel = std::fabs(numeric - grad[k]) / std::max(std::fabs(grad[k]), 1e-300);
      worst = std::max(worst, rel);
      if (rel > 1e-4) c.passed = false;
    }
    c.detail = "max relative error = " + fmt_double(worst);
    checks.push_back(std::move(c));
  }

  {
    InvariantCheck c{"upper_bound_monotonicity", true, {}};
    for (std::size_t t = 0; t < instances; ++t) {
      const double a = 0.01 + 2.0 * unit(rng);
      const double r = 1.0 + bounds.eps_high + 0.001 + unit(rng);
      const double wider = bounds.eps_high + unit(rng);
      const double lhs = dapo_objective(std::vector{r}, std::vector{a}, bounds);
      const double rhs = dapo_objective(std::vector{r}, std::vector{a}, ClipBounds{bounds.eps_low, wider});
      if (rhs < lhs) c.passed = false;
    }
    c.detail = "raising eps_high with A > 0, r > 1 + eps_high";
    checks.push_back(std::move(c));
  }
  return checks;
}

}  // namespace fixaudit
