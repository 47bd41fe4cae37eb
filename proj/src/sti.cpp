#include "relkal/sti.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace relkal::sti {

using lie::exp_se23;
using lie::hat;

Mat5 tilde_tangent(const DecomposedField& d, const SE23& g) {
  return g.matrix() * hat(d.tilde(g));
}

Mat5 reconstruct_field(const DecomposedField& d, const SE23& g, double t) {
  const Mat5 G = g.matrix();
  return hat(d.xi(t)) * G + G * hat(d.tilde(g)) + G * hat(d.zeta(t));
}

std::vector<Sample> draw_samples(int n, double t_max, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  std::uniform_real_distribution<double> time(0.0, t_max);
  auto rand_element = [&] {
    Vec9 w;
    for (int i = 0; i < 9; ++i) w[i] = coord(gen);
    return exp_se23(w);
  };
  std::vector<Sample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    Sample s;
    s.h = rand_element();
    s.g = rand_element();
    s.t = time(gen);
    out.push_back(s);
  }
  return out;
}

void to_json(nlohmann::json& j, const ConditionReport& r) {
  j = nlohmann::json{{"condition", r.condition},
                     {"max_residual", r.max_residual},
                     {"sample_count", r.sample_count},
                     {"threshold", r.threshold},
                     {"verdict", r.pass ? "pass" : "fail"}};
}

namespace {

ConditionReport aggregate(std::string condition, double threshold,
                          const std::vector<double>& residuals) {
  ConditionReport r;
  r.condition = std::move(condition);
  r.threshold = threshold;
  r.sample_count = static_cast<int>(residuals.size());
  r.max_residual =
      residuals.empty()
          ? 0.0
          : *std::max_element(residuals.begin(), residuals.end());
  r.pass = r.max_residual <= threshold;
  return r;
}

}  // namespace

ConditionReport check_eti(const DecomposedField& d,
                          const std::vector<Sample>& samples,
                          double threshold) {
  if (samples.empty()) throw std::invalid_argument("check_eti: empty samples");
  std::vector<double> res;
  res.reserve(samples.size());
  for (const Sample& s : samples) {
    const Mat5 H = s.h.matrix();
    const Mat5 G = s.g.matrix();
    const Mat5 r = tilde_tangent(d, s.h * s.g) - H * tilde_tangent(d, s.g) -
                   tilde_tangent(d, s.h) * G;
    res.push_back(r.norm());
  }
  return aggregate("eti", threshold, res);
}

ConditionReport check_l_rti(const DecomposedField& d1,
                            const DecomposedField& d2,
                            const std::vector<Sample>& samples,
                            double threshold) {
  if (samples.empty())
    throw std::invalid_argument("check_l_rti: empty samples");
  std::vector<double> res;
  res.reserve(samples.size());
  for (const Sample& s : samples) {
    const Mat5 H = s.h.matrix();
    const Mat5 G = s.g.matrix();
    const Vec9 dxi = d2.xi(s.t) - d1.xi(s.t);
    const Mat5 r = tilde_tangent(d2, s.h * s.g) - H * tilde_tangent(d2, s.g) -
                   tilde_tangent(d1, s.h) * G - H * hat(dxi) * G +
                   hat(dxi) * H * G;
    res.push_back(r.norm());
  }
  return aggregate("l_rti", threshold, res);
}

ConditionReport check_r_rti(const DecomposedField& d1,
                            const DecomposedField& d2,
                            const std::vector<Sample>& samples,
                            double threshold) {
  if (samples.empty())
    throw std::invalid_argument("check_r_rti: empty samples");
  std::vector<double> res;
  res.reserve(samples.size());
  for (const Sample& s : samples) {
    const Mat5 H = s.h.matrix();
    const Mat5 G = s.g.matrix();
    const Vec9 dzeta = d1.zeta(s.t) - d2.zeta(s.t);
    const Mat5 r = tilde_tangent(d1, s.h * s.g) - H * tilde_tangent(d2, s.g) -
                   tilde_tangent(d1, s.h) * G - H * hat(dzeta) * G +
                   H * G * hat(dzeta);
    res.push_back(r.norm());
  }
  return aggregate("r_rti", threshold, res);
}

Mat5 error_ode_left(const DecomposedField& d, const SE23& f, double t) {
  const Mat5 F = f.matrix();
  const Mat5 Z = hat(d.zeta(t));
  return tilde_tangent(d, f) + F * Z - Z * F;
}

Mat5 error_ode_right(const DecomposedField& d, const SE23& h, double t) {
  const Mat5 H = h.matrix();
  const Mat5 Xi = hat(d.xi(t));
  return tilde_tangent(d, h) + Xi * H - H * Xi;
}

// Term order below mirrors error_ode_left/right so that with d1 == d2 the
// relative forms reduce to the error forms bitwise, not just approximately.

Mat5 relative_ode_left(const DecomposedField& d1, const DecomposedField& d2,
                       const SE23& g12, double t) {
  const Mat5 G = g12.matrix();
  const Vec9 left = d2.xi(t) - d1.xi(t) - d1.zeta(t);
  return tilde_tangent(d2, g12) + G * hat(d2.zeta(t)) + hat(left) * G;
}

Mat5 relative_ode_right(const DecomposedField& d1, const DecomposedField& d2,
                        const SE23& g12, double t) {
  const Mat5 G = g12.matrix();
  const Vec9 right = d1.zeta(t) - d2.zeta(t) - d2.xi(t);
  return tilde_tangent(d1, g12) + hat(d1.xi(t)) * G + G * hat(right);
}

Mat5 rel_error_ode(const DecomposedField& d1, const DecomposedField& d2,
                   const SE23& err, Chirality err_chirality,
                   Chirality rel_chirality, double t) {
  const Mat5 E = err.matrix();
  if (rel_chirality == Chirality::kLeft) {
    if (err_chirality == Chirality::kLeft) {
      const Mat5 Z = hat(d2.zeta(t));
      return tilde_tangent(d2, err) + E * Z - Z * E;
    }
    const Mat5 Xi12 = hat(Vec9(d2.xi(t) - d1.xi(t) - d1.zeta(t)));
    return tilde_tangent(d2, err) + Xi12 * E - E * Xi12;
  }
  if (err_chirality == Chirality::kLeft) {
    const Mat5 Z12 = hat(Vec9(d1.zeta(t) - d2.zeta(t) - d2.xi(t)));
    return tilde_tangent(d1, err) + E * Z12 - Z12 * E;
  }
  const Mat5 Xi = hat(d1.xi(t));
  return tilde_tangent(d1, err) + Xi * E - E * Xi;
}

std::function<Mat5(const SE23&, double)> make_rel_error_ode(
    const DecomposedField& d1, const DecomposedField& d2,
    Chirality err_chirality, Chirality rel_chirality,
    const std::vector<Sample>& samples, double threshold) {
  const ConditionReport rti = rel_chirality == Chirality::kLeft
                                  ? check_l_rti(d1, d2, samples, threshold)
                                  : check_r_rti(d1, d2, samples, threshold);
  if (!rti.pass) throw std::runtime_error("RTI precondition violated");
  return [d1, d2, err_chirality, rel_chirality](const SE23& err, double t) {
    return rel_error_ode(d1, d2, err, err_chirality, rel_chirality, t);
  };
}

}  // namespace relkal::sti
