#include "coeffrec/neural.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace coeffrec {

MlpParams::MlpParams(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw std::invalid_argument("MlpParams: need at least one affine layer");
  if (sizes_.back() != 1) throw std::invalid_argument("MlpParams: output layer must have size 1");
  if (sizes_.front() < 1 || sizes_.front() > 2) throw std::invalid_argument("MlpParams: input dimension must be 1 or 2");
  std::size_t total = 0;
  for (std::size_t l = 1; l < sizes_.size(); ++l) {
    if (sizes_[l] < 1) throw std::invalid_argument("MlpParams: layer sizes must be positive");
    offsets_.push_back(total);
    total += std::size_t(sizes_[l]) * sizes_[l - 1] + sizes_[l];
  }
  data_.assign(total, 0.0);
}

MlpParams::MlpParams(std::vector<int> layer_sizes, std::vector<double> flat) : MlpParams(std::move(layer_sizes)) {
  if (flat.size() != data_.size()) throw std::invalid_argument("MlpParams: flat parameter count mismatch");
  for (double v : flat)
    if (!std::isfinite(v)) throw std::invalid_argument("MlpParams: non-finite parameter");
  data_ = std::move(flat);
}

int MlpParams::width() const { return *std::max_element(sizes_.begin(), sizes_.end()); }

double MlpParams::max_abs() const {
  double r = 0.0;
  for (double v : data_) r = std::max(r, std::abs(v));
  return r;
}

MlpParams glorot_init(std::vector<int> layer_sizes, std::uint64_t seed, double output_bias) {
  MlpParams p(std::move(layer_sizes));
  std::mt19937_64 rng(seed);
  const auto& s = p.layer_sizes();
  for (int l = 1; l <= p.depth(); ++l) {
    const double limit = std::sqrt(6.0 / double(s[l - 1] + s[l]));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (int i = 0; i < s[l]; ++i)
      for (int j = 0; j < s[l - 1]; ++j) p.weight(l, i, j) = dist(rng);
  }
  p.bias(p.depth(), 0) = output_bias;
  return p;
}

namespace {

// Forward pass with input tangents: for each layer the pre-activation z,
// the activation v and the tangents dv/dx_k (k < d). Layer 0 holds x.
struct Tape {
  std::vector<std::vector<double>> z, v;
  std::vector<std::vector<double>> dz;  // layer-major: dz[l][k * n_l + i]
  std::vector<std::vector<double>> dv;
};

thread_local Tape tape;

void run_forward(const MlpParams& p, const Point& x) {
  const auto& s = p.layer_sizes();
  const int L = p.depth();
  const int d = s[0];
  tape.z.resize(L + 1);
  tape.v.resize(L + 1);
  tape.dz.resize(L + 1);
  tape.dv.resize(L + 1);
  tape.v[0].assign(x.begin(), x.begin() + d);
  tape.dv[0].assign(std::size_t(d) * d, 0.0);
  for (int k = 0; k < d; ++k) tape.dv[0][std::size_t(k) * d + k] = 1.0;

  for (int l = 1; l <= L; ++l) {
    const int n = s[l], m = s[l - 1];
    auto& z = tape.z[l];
    auto& dz = tape.dz[l];
    z.assign(n, 0.0);
    dz.assign(std::size_t(d) * n, 0.0);
    const double* w = p.flat().data() + p.weight_offset(l);
    const double* b = p.flat().data() + p.bias_offset(l);
    const auto& vin = tape.v[l - 1];
    const auto& dvin = tape.dv[l - 1];
    for (int i = 0; i < n; ++i) {
      const double* row = w + std::size_t(i) * m;
      double acc = b[i];
      for (int j = 0; j < m; ++j) acc += row[j] * vin[j];
      z[i] = acc;
      for (int k = 0; k < d; ++k) {
        const double* t = dvin.data() + std::size_t(k) * m;
        double a = 0.0;
        for (int j = 0; j < m; ++j) a += row[j] * t[j];
        dz[std::size_t(k) * n + i] = a;
      }
    }
    auto& v = tape.v[l];
    auto& dv = tape.dv[l];
    if (l == L) {
      v = z;
      dv = dz;
    } else {
      v.resize(n);
      dv.resize(std::size_t(d) * n);
      for (int i = 0; i < n; ++i) {
        const double th = std::tanh(z[i]);
        v[i] = th;
        const double dr = 1.0 - th * th;
        for (int k = 0; k < d; ++k) dv[std::size_t(k) * n + i] = dr * dz[std::size_t(k) * n + i];
      }
    }
  }
}

void check_dim(const MlpParams& p, const Point&) {
  if (p.size() == 0) throw std::invalid_argument("MlpParams: empty network");
}

}  // namespace

NetValue evaluate(const MlpParams& params, const Point& x) {
  check_dim(params, x);
  run_forward(params, x);
  const int L = params.depth();
  NetValue out;
  out.value = tape.v[L][0];
  for (int k = 0; k < params.input_dim(); ++k) out.gradient[k] = tape.dv[L][k];
  return out;
}

double forward(const MlpParams& params, const Point& x) { return evaluate(params, x).value; }

Point input_gradient(const MlpParams& params, const Point& x) { return evaluate(params, x).gradient; }

void param_vjp(const MlpParams& params, const Point& x, double seed_value, const Point& seed_grad,
               std::span<double> grad) {
  if (grad.size() != params.size()) throw std::invalid_argument("param_vjp: gradient size mismatch");
  check_dim(params, x);
  run_forward(params, x);
  const auto& s = params.layer_sizes();
  const int L = params.depth();
  const int d = s[0];

  // adjoints of v^(l) and of its tangents dv^(l)/dx_k
  std::vector<double> vbar{seed_value}, dvbar(d);
  for (int k = 0; k < d; ++k) dvbar[k] = seed_grad[k];
  std::vector<double> zbar, dzbar, vbar_in, dvbar_in;

  for (int l = L; l >= 1; --l) {
    const int n = s[l], m = s[l - 1];
    zbar.assign(n, 0.0);
    dzbar.assign(std::size_t(d) * n, 0.0);
    if (l == L) {
      zbar = vbar;
      dzbar = dvbar;
    } else {
      const auto& v = tape.v[l];
      const auto& dz = tape.dz[l];
      for (int i = 0; i < n; ++i) {
        const double th = v[i];
        const double d1 = 1.0 - th * th;
        const double d2 = -2.0 * th * d1;
        double zb = vbar[i] * d1;
        for (int k = 0; k < d; ++k) {
          const std::size_t idx = std::size_t(k) * n + i;
          zb += dvbar[idx] * dz[idx] * d2;
          dzbar[idx] = dvbar[idx] * d1;
        }
        zbar[i] = zb;
      }
    }
    const double* w = params.flat().data() + params.weight_offset(l);
    double* gw = grad.data() + params.weight_offset(l);
    double* gb = grad.data() + params.bias_offset(l);
    const auto& vin = tape.v[l - 1];
    const auto& dvin = tape.dv[l - 1];
    for (int i = 0; i < n; ++i) {
      gb[i] += zbar[i];
      double* grow = gw + std::size_t(i) * m;
      for (int j = 0; j < m; ++j) {
        double acc = zbar[i] * vin[j];
        for (int k = 0; k < d; ++k) acc += dzbar[std::size_t(k) * n + i] * dvin[std::size_t(k) * m + j];
        grow[j] += acc;
      }
    }
    if (l == 1) break;
    vbar_in.assign(m, 0.0);
    dvbar_in.assign(std::size_t(d) * m, 0.0);
    for (int i = 0; i < n; ++i) {
      const double* row = w + std::size_t(i) * m;
      for (int j = 0; j < m; ++j) {
        vbar_in[j] += row[j] * zbar[i];
        for (int k = 0; k < d; ++k) dvbar_in[std::size_t(k) * m + j] += row[j] * dzbar[std::size_t(k) * n + i];
      }
    }
    std::swap(vbar, vbar_in);
    std::swap(dvbar, dvbar_in);
  }
}

Projected project_box(double v, const BoxBounds& bounds) {
  if (v < bounds.c0) return {bounds.c0, false};
  if (v > bounds.c1) return {bounds.c1, false};
  return {v, true};
}

DerivativeBoundReport derivative_bound_report(const MlpParams& params, int sample_count) {
  DerivativeBoundReport r;
  r.R = params.max_abs();
  r.W = params.width();
  r.L = params.depth();
  r.applicable = r.R * r.W >= 2.0;
  const double L = r.L, W = r.W, R = r.R;
  r.bound_first = std::pow(R, L) * std::pow(W, L - 1);
  r.bound_second = 2.0 * std::pow(R, 2 * L) * std::pow(W, 2 * L - 2);
  r.bound_third = 10.0 * std::pow(R, 3 * L) * std::pow(W, 3 * L - 3);

  const int d = params.input_dim();
  const int ns = std::max(sample_count, 2);
  const double h2 = 1e-5;  // second partials
  const double h3 = 1e-3;  // third partials
  auto shifted = [](Point x, int a, double da, int b, double db) {
    x[a] += da;
    x[b] += db;
    return x;
  };
  auto g = [&](const Point& x, int k) { return input_gradient(params, x)[k]; };

  const int ny = d == 2 ? ns : 1;
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < ns; ++ix) {
      const Point x{ix / double(ns - 1), d == 2 ? iy / double(ns - 1) : 0.0};
      const Point g0 = input_gradient(params, x);
      for (int k = 0; k < d; ++k) {
        r.sup_first = std::max(r.sup_first, std::abs(g0[k]));
        for (int m = 0; m < d; ++m) {
          const double second = (g(shifted(x, m, h2, m, 0.0), k) - g(shifted(x, m, -h2, m, 0.0), k)) / (2 * h2);
          r.sup_second = std::max(r.sup_second, std::abs(second));
          for (int n = m; n < d; ++n) {
            double third;
            if (m == n) {
              third = (g(shifted(x, m, h3, m, 0.0), k) - 2.0 * g0[k] + g(shifted(x, m, -h3, m, 0.0), k)) / (h3 * h3);
            } else {
              third = (g(shifted(x, m, h3, n, h3), k) - g(shifted(x, m, h3, n, -h3), k) -
                       g(shifted(x, m, -h3, n, h3), k) + g(shifted(x, m, -h3, n, -h3), k)) /
                      (4 * h3 * h3);
            }
            r.sup_third = std::max(r.sup_third, std::abs(third));
          }
        }
      }
    }
  }
  if (r.applicable) {
    r.violations = int(r.sup_first > r.bound_first) + int(r.sup_second > r.bound_second) +
                   int(r.sup_third > r.bound_third);
  }
  return r;
}

void save_checkpoint(const MlpParams& params, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + file.string());
  out.precision(17);
  out << "coeffrec-mlp 1\n";
  const auto& s = params.layer_sizes();
  for (std::size_t i = 0; i < s.size(); ++i) out << (i ? "," : "") << s[i];
  out << '\n';
  for (double v : params.flat()) out << v << '\n';
}

MlpParams load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + file.string());
  std::string line;
  std::getline(in, line);
  if (line != "coeffrec-mlp 1") throw std::runtime_error("load_checkpoint: bad header in " + file.string());
  std::getline(in, line);
  std::vector<int> sizes;
  std::stringstream ss(line);
  for (std::string tok; std::getline(ss, tok, ',');) sizes.push_back(std::stoi(tok));
  std::vector<double> flat;
  while (std::getline(in, line))
    if (!line.empty()) flat.push_back(std::stod(line));
  return MlpParams(std::move(sizes), std::move(flat));
}

}  // namespace coeffrec
