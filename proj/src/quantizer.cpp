#include "pdmp_impulse/quantizer.hpp"

#include "pdmp_impulse/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace pdmp {

// ---------------------------------------------------------------------------
// StartSpec, TransitionMatrix, QuantizedChain
// ---------------------------------------------------------------------------

StartSpec StartSpec::fixed(State x0) {
  StartSpec spec;
  spec.kind = Kind::Fixed;
  spec.point = std::move(x0);
  return spec;
}

StartSpec StartSpec::uniform_over(std::vector<State> controls) {
  if (controls.empty()) throw ConfigError("uniform start needs a nonempty control set");
  StartSpec spec;
  spec.kind = Kind::UniformOverControls;
  spec.controls = std::move(controls);
  return spec;
}

std::string StartSpec::label() const {
  return kind == Kind::Fixed ? "fixed" : "uniform_over_controls";
}

namespace {

bool same_state(const State& a, const State& b) {
  return a.size() == b.size() && (a.size() == 0 || a == b);
}

bool same_start(const StartSpec& a, const StartSpec& b) {
  if (a.kind != b.kind) return false;
  if (a.kind == StartSpec::Kind::Fixed) return same_state(a.point, b.point);
  if (a.controls.size() != b.controls.size()) return false;
  for (std::size_t i = 0; i < a.controls.size(); ++i) {
    if (!same_state(a.controls[i], b.controls[i])) return false;
  }
  return true;
}

}  // namespace

double TransitionMatrix::at(std::size_t r, std::size_t c) const {
  const auto cols_r = row_cols(r);
  const auto it = std::lower_bound(cols_r.begin(), cols_r.end(), static_cast<std::uint32_t>(c));
  if (it == cols_r.end() || *it != c) return 0.0;
  return prob[row_ptr[r] + static_cast<std::size_t>(it - cols_r.begin())];
}

TransitionMatrix TransitionMatrix::from_dense(const std::vector<std::vector<double>>& dense) {
  TransitionMatrix m;
  m.rows = dense.size();
  m.cols = dense.empty() ? 0 : dense.front().size();
  m.row_ptr.assign(1, 0);
  for (const auto& row : dense) {
    if (row.size() != m.cols) throw ConfigError("transition rows must have equal length");
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (row[c] != 0.0) {
        m.col.push_back(static_cast<std::uint32_t>(c));
        m.prob.push_back(row[c]);
      }
    }
    m.row_ptr.push_back(m.col.size());
  }
  return m;
}

std::vector<std::vector<double>> TransitionMatrix::to_dense() const {
  std::vector<std::vector<double>> dense(rows, std::vector<double>(cols, 0.0));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::uint64_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) dense[r][col[k]] = prob[k];
  }
  return dense;
}

QuantizedChain QuantizedChain::truncated(int N) const {
  if (N < 0 || N > horizon()) {
    throw ConfigError("cannot truncate a chain of horizon " + std::to_string(horizon()) +
                      " to " + std::to_string(N));
  }
  QuantizedChain out = *this;
  out.layers.resize(static_cast<std::size_t>(N) + 1);
  out.transitions.resize(static_cast<std::size_t>(N));
  out.distortion_z.resize(static_cast<std::size_t>(N) + 1);
  out.distortion_s.resize(static_cast<std::size_t>(N) + 1);
  return out;
}

void QuantizedChain::check() const {
  if (layers.empty()) throw ConfigError("chain has no layers");
  if (transitions.size() + 1 != layers.size() || distortion_z.size() != layers.size() ||
      distortion_s.size() != layers.size()) {
    throw ConfigError("chain layer, transition and distortion counts disagree");
  }
  for (std::size_t n = 0; n < layers.size(); ++n) {
    const auto& L = layers[n];
    if (L.size() == 0 || L.z.size() != L.size() || L.weights.size() != L.size()) {
      throw ConfigError("layer " + std::to_string(n) + " is empty or inconsistent");
    }
    if (L.scale.size() != static_cast<std::size_t>(state_dim) + 1) {
      throw ConfigError("layer " + std::to_string(n) + " has a bad scale vector");
    }
  }
  for (std::size_t n = 0; n < transitions.size(); ++n) {
    const auto& T = transitions[n];
    if (T.rows != layers[n].size() || T.cols != layers[n + 1].size() ||
        T.row_ptr.size() != T.rows + 1 || T.col.size() != T.prob.size() ||
        T.row_ptr.back() != T.col.size()) {
      throw ConfigError("transition " + std::to_string(n) + " does not match its layers");
    }
    for (auto c : T.col) {
      if (c >= T.cols) throw ConfigError("transition column out of range");
    }
  }
}

bool QuantizedChain::operator==(const QuantizedChain& o) const {
  if (state_dim != o.state_dim || p != o.p || !same_start(start, o.start) ||
      layers.size() != o.layers.size() || transitions.size() != o.transitions.size() ||
      distortion_z != o.distortion_z || distortion_s != o.distortion_s ||
      warnings != o.warnings) {
    return false;
  }
  for (std::size_t n = 0; n < layers.size(); ++n) {
    const auto& a = layers[n];
    const auto& b = o.layers[n];
    if (a.index != b.index || a.s != b.s || a.weights != b.weights || a.scale != b.scale ||
        a.z.size() != b.z.size()) {
      return false;
    }
    for (std::size_t i = 0; i < a.z.size(); ++i) {
      if (!same_state(a.z[i], b.z[i])) return false;
    }
  }
  for (std::size_t n = 0; n < transitions.size(); ++n) {
    const auto& a = transitions[n];
    const auto& b = o.transitions[n];
    if (a.rows != b.rows || a.cols != b.cols || a.row_ptr != b.row_ptr || a.col != b.col ||
        a.prob != b.prob) {
      return false;
    }
  }
  return true;
}

ChainSampler make_chain_sampler(std::shared_ptr<const PdmpModel> model, StartSpec start,
                                int horizon) {
  if (horizon < 0) throw ConfigError("chain horizon must be nonnegative");
  ChainSampler sampler;
  sampler.horizon = horizon;
  sampler.state_dim = model->state_dim;
  sampler.start = start;
  sampler.draw = [model = std::move(model), start = std::move(start), horizon](Rng& rng) {
    if (start.kind == StartSpec::Kind::Fixed) {
      return sample_chain(*model, start.point, horizon, rng);
    }
    std::uniform_int_distribution<std::size_t> pick(0, start.controls.size() - 1);
    return sample_chain(*model, start.controls[pick(rng)], horizon, rng);
  };
  return sampler;
}

// ---------------------------------------------------------------------------
// Projection
// ---------------------------------------------------------------------------

namespace {

int grid_dim(const LayerGrid& grid) { return static_cast<int>(grid.scale.size()); }

std::vector<double> inverse_scale(const LayerGrid& grid) {
  std::vector<double> inv(grid.scale.size());
  for (std::size_t k = 0; k < inv.size(); ++k) {
    inv[k] = grid.scale[k] > 0.0 && std::isfinite(grid.scale[k]) ? 1.0 / grid.scale[k] : 1.0;
  }
  return inv;
}

// Normalized coordinates (z_0 .. z_{d-1}, s) written to out.
void normalize(const State& z, double s, const std::vector<double>& inv, double* out) {
  const int d = static_cast<int>(inv.size()) - 1;
  for (int k = 0; k < d; ++k) out[k] = z(k) * inv[static_cast<std::size_t>(k)];
  out[d] = s * inv[static_cast<std::size_t>(d)];
}

double p_distance(const double* a, const double* b, int dim, double p) {
  double acc = 0.0;
  if (p == 2.0) {
    for (int k = 0; k < dim; ++k) {
      const double t = a[k] - b[k];
      acc += t * t;
    }
  } else {
    for (int k = 0; k < dim; ++k) acc += std::pow(std::abs(a[k] - b[k]), p);
  }
  return acc;
}

double p_power(double x, double p) { return p == 2.0 ? x * x : std::pow(std::abs(x), p); }

}  // namespace

std::size_t project(const State& z, double s, const LayerGrid& grid, double p) {
  if (grid.size() == 0) throw ConfigError("project: empty grid");
  const auto inv = inverse_scale(grid);
  const int dim = grid_dim(grid);
  double q[kMaxStateDim + 1];
  double c[kMaxStateDim + 1];
  normalize(z, s, inv, q);
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    normalize(grid.z[i], grid.s[i], inv, c);
    const double d = p_distance(c, q, dim, p);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

NearestCellIndex::NearestCellIndex(const LayerGrid& grid, double p)
    : dim_(grid_dim(grid)), p_(p), inv_scale_(inverse_scale(grid)) {
  if (grid.size() == 0) throw ConfigError("NearestCellIndex: empty grid");
  const std::size_t n = grid.size();
  std::vector<double> raw(n * static_cast<std::size_t>(dim_));
  for (std::size_t i = 0; i < n; ++i) {
    normalize(grid.z[i], grid.s[i], inv_scale_, raw.data() + i * dim_);
  }
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
    return raw[a * dim_] < raw[b * dim_];
  });
  points_.resize(raw.size());
  for (std::size_t pos = 0; pos < n; ++pos) {
    std::copy_n(raw.data() + order_[pos] * dim_, dim_, points_.data() + pos * dim_);
  }
}

double NearestCellIndex::distance(std::size_t pos, const double* q) const {
  return p_distance(points_.data() + pos * dim_, q, dim_, p_);
}

std::size_t NearestCellIndex::nearest(const State& z, double s) const {
  double q[kMaxStateDim + 1];
  normalize(z, s, inv_scale_, q);
  const std::size_t n = order_.size();
  // First position whose leading coordinate is >= q[0].
  std::size_t lo = 0;
  std::size_t hi = n;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (points_[mid * dim_] < q[0]) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  double best_d = std::numeric_limits<double>::infinity();
  std::size_t best_cell = std::numeric_limits<std::size_t>::max();
  auto consider = [&](std::size_t pos) {
    const double d = distance(pos, q);
    const std::size_t cell = order_[pos];
    if (d < best_d || (d == best_d && cell < best_cell)) {
      best_d = d;
      best_cell = cell;
    }
  };
  std::size_t right = lo;
  std::ptrdiff_t left = static_cast<std::ptrdiff_t>(lo) - 1;
  bool go_right = right < n;
  bool go_left = left >= 0;
  while (go_right || go_left) {
    if (go_right) {
      if (p_power(points_[right * dim_] - q[0], p_) > best_d) {
        go_right = false;
      } else {
        consider(right);
        go_right = ++right < n;
      }
    }
    if (go_left) {
      const auto pos = static_cast<std::size_t>(left);
      if (p_power(q[0] - points_[pos * dim_], p_) > best_d) {
        go_left = false;
      } else {
        consider(pos);
        go_left = --left >= 0;
      }
    }
  }
  return best_cell;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kPilotStream = 1;
constexpr std::uint64_t kTrainStream = 2;
constexpr std::uint64_t kEstimationStreamBase = std::uint64_t{1} << 32;
constexpr std::int64_t kChunkPaths = 4096;

std::vector<int> expand_sizes(const std::vector<int>& sizes, int horizon) {
  if (sizes.empty()) throw ConfigError("layer_sizes must not be empty");
  std::vector<int> out;
  if (sizes.size() == 1) {
    out.assign(static_cast<std::size_t>(horizon) + 1, sizes.front());
  } else if (sizes.size() == static_cast<std::size_t>(horizon) + 1) {
    out = sizes;
  } else {
    throw ConfigError("layer_sizes must have 1 or N + 1 entries");
  }
  for (int k : out) {
    if (k < 1) throw ConfigError("every layer size must be >= 1");
  }
  return out;
}

std::vector<State> exact_start_cells(const StartSpec& start) {
  if (start.kind == StartSpec::Kind::Fixed) return {start.point};
  std::vector<State> cells;
  for (const auto& y : start.controls) {
    for (const auto& c : cells) {
      if (same_state(c, y)) throw ConfigError("control set contains duplicate points");
    }
    cells.push_back(y);
  }
  return cells;
}

std::vector<double> component_std(const std::vector<ChainPath>& pilot, std::size_t layer,
                                  int state_dim) {
  const int dim = state_dim + 1;
  std::vector<double> mean(static_cast<std::size_t>(dim), 0.0);
  std::vector<double> sq(static_cast<std::size_t>(dim), 0.0);
  const double n = static_cast<double>(pilot.size());
  for (const auto& path : pilot) {
    for (int k = 0; k < state_dim; ++k) mean[static_cast<std::size_t>(k)] += path.z[layer](k);
    mean[static_cast<std::size_t>(state_dim)] += path.s[layer];
  }
  for (auto& m : mean) m /= n;
  for (const auto& path : pilot) {
    for (int k = 0; k < state_dim; ++k) {
      const double t = path.z[layer](k) - mean[static_cast<std::size_t>(k)];
      sq[static_cast<std::size_t>(k)] += t * t;
    }
    const double t = path.s[layer] - mean[static_cast<std::size_t>(state_dim)];
    sq[static_cast<std::size_t>(state_dim)] += t * t;
  }
  std::vector<double> sd(static_cast<std::size_t>(dim));
  for (std::size_t k = 0; k < sd.size(); ++k) {
    const double v = std::sqrt(sq[k] / n);
    sd[k] = v > 0.0 && std::isfinite(v) ? v : 1.0;
  }
  return sd;
}

// Sorted-by-leading-coordinate view of a moving centroid set.
class MovingIndex {
 public:
  MovingIndex(const LayerGrid& grid, double p) : index_grid_(grid), p_(p) {
    inv_ = inverse_scale(grid);
    dim_ = static_cast<int>(inv_.size());
    const std::size_t n = grid.size();
    pts_.resize(n * static_cast<std::size_t>(dim_));
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::vector<double> raw(pts_.size());
    for (std::size_t i = 0; i < n; ++i) normalize(grid.z[i], grid.s[i], inv_, raw.data() + i * dim_);
    std::stable_sort(order_.begin(), order_.end(),
                     [&](std::size_t a, std::size_t b) { return raw[a * dim_] < raw[b * dim_]; });
    pos_of_.resize(n);
    for (std::size_t pos = 0; pos < n; ++pos) {
      std::copy_n(raw.data() + order_[pos] * dim_, dim_, pts_.data() + pos * dim_);
      pos_of_[order_[pos]] = pos;
    }
  }

  std::size_t nearest(const double* q) const {
    const std::size_t n = order_.size();
    std::size_t lo = 0;
    std::size_t hi = n;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (pts_[mid * dim_] < q[0]) {
        lo = mid + 1;
      } else {
        hi = mid;
      }
    }
    double best_d = std::numeric_limits<double>::infinity();
    std::size_t best_cell = std::numeric_limits<std::size_t>::max();
    auto consider = [&](std::size_t pos) {
      const double d = p_distance(pts_.data() + pos * dim_, q, dim_, p_);
      if (d < best_d || (d == best_d && order_[pos] < best_cell)) {
        best_d = d;
        best_cell = order_[pos];
      }
    };
    std::size_t right = lo;
    std::ptrdiff_t left = static_cast<std::ptrdiff_t>(lo) - 1;
    bool go_right = right < n;
    bool go_left = left >= 0;
    while (go_right || go_left) {
      if (go_right) {
        if (p_power(pts_[right * dim_] - q[0], p_) > best_d) {
          go_right = false;
        } else {
          consider(right);
          go_right = ++right < n;
        }
      }
      if (go_left) {
        const auto pos = static_cast<std::size_t>(left);
        if (p_power(q[0] - pts_[pos * dim_], p_) > best_d) {
          go_left = false;
        } else {
          consider(pos);
          go_left = --left >= 0;
        }
      }
    }
    return best_cell;
  }

  // Moves cell toward the normalized target by step gamma and restores order.
  void move_toward(std::size_t cell, const double* q, double gamma) {
    std::size_t pos = pos_of_[cell];
    double* c = pts_.data() + pos * dim_;
    for (int k = 0; k < dim_; ++k) c[k] += gamma * (q[k] - c[k]);
    while (pos + 1 < order_.size() && pts_[(pos + 1) * dim_] < pts_[pos * dim_]) {
      swap_positions(pos, pos + 1);
      ++pos;
    }
    while (pos > 0 && pts_[(pos - 1) * dim_] > pts_[pos * dim_]) {
      swap_positions(pos, pos - 1);
      --pos;
    }
  }

  // Writes unscaled centroids back into the grid.
  void export_to(LayerGrid& grid) const {
    const int d = dim_ - 1;
    for (std::size_t pos = 0; pos < order_.size(); ++pos) {
      const std::size_t cell = order_[pos];
      const double* c = pts_.data() + pos * dim_;
      for (int k = 0; k < d; ++k) grid.z[cell](k) = c[k] / inv_[static_cast<std::size_t>(k)];
      grid.s[cell] = c[d] / inv_[static_cast<std::size_t>(d)];
    }
  }

  const std::vector<double>& inv() const { return inv_; }

 private:
  void swap_positions(std::size_t a, std::size_t b) {
    std::swap_ranges(pts_.begin() + static_cast<std::ptrdiff_t>(a * dim_),
                     pts_.begin() + static_cast<std::ptrdiff_t>((a + 1) * dim_),
                     pts_.begin() + static_cast<std::ptrdiff_t>(b * dim_));
    std::swap(order_[a], order_[b]);
    pos_of_[order_[a]] = a;
    pos_of_[order_[b]] = b;
  }

  const LayerGrid& index_grid_;
  double p_;
  int dim_ = 0;
  std::vector<double> inv_;
  std::vector<double> pts_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> pos_of_;
};

}  // namespace

QuantizedChain train_clvq(const ChainSampler& sampler, const QuantizerOptions& options) {
  const int N = sampler.horizon;
  const auto sizes = expand_sizes(options.layer_sizes, N);
  if (!(options.p >= 1.0)) throw ConfigError("quantization norm order p must be >= 1");
  if (options.train_paths < N + 1) throw ConfigError("train_paths must be >= the layer count");
  if (options.estimation_paths < 1) throw ConfigError("estimation_paths must be positive");

  QuantizedChain chain;
  chain.state_dim = sampler.state_dim;
  chain.p = options.p;
  chain.start = sampler.start;
  chain.layers.resize(static_cast<std::size_t>(N) + 1);

  const int k_max = *std::max_element(sizes.begin(), sizes.end());
  const std::int64_t n_pilot = std::max<std::int64_t>(options.pilot_paths, 2 * k_max);
  std::vector<ChainPath> pilot;
  pilot.reserve(static_cast<std::size_t>(n_pilot));
  {
    Rng rng = make_rng(options.seed, kPilotStream);
    for (std::int64_t i = 0; i < n_pilot; ++i) pilot.push_back(sampler.draw(rng));
  }

  std::vector<bool> trainable(static_cast<std::size_t>(N) + 1, false);
  for (int n = 0; n <= N; ++n) {
    auto& grid = chain.layers[static_cast<std::size_t>(n)];
    grid.index = n;
    grid.scale = component_std(pilot, static_cast<std::size_t>(n), sampler.state_dim);
    if (n == 0) {
      for (auto& z : exact_start_cells(sampler.start)) {
        grid.z.push_back(std::move(z));
        grid.s.push_back(0.0);
      }
      continue;
    }
    // Initial centroids: the first K distinct pilot draws.
    const auto K = static_cast<std::size_t>(sizes[static_cast<std::size_t>(n)]);
    for (const auto& path : pilot) {
      if (grid.size() == K) break;
      const auto& z = path.z[static_cast<std::size_t>(n)];
      const double s = path.s[static_cast<std::size_t>(n)];
      bool seen = false;
      for (std::size_t i = 0; i < grid.size() && !seen; ++i) {
        seen = grid.s[i] == s && same_state(grid.z[i], z);
      }
      if (!seen) {
        grid.z.push_back(z);
        grid.s.push_back(s);
      }
    }
    trainable[static_cast<std::size_t>(n)] = grid.size() > 1;
  }
  pilot.clear();
  pilot.shrink_to_fit();

  std::vector<std::unique_ptr<MovingIndex>> moving(static_cast<std::size_t>(N) + 1);
  for (int n = 1; n <= N; ++n) {
    if (trainable[static_cast<std::size_t>(n)]) {
      moving[static_cast<std::size_t>(n)] =
          std::make_unique<MovingIndex>(chain.layers[static_cast<std::size_t>(n)], options.p);
    }
  }
  {
    Rng rng = make_rng(options.seed, kTrainStream);
    double q[kMaxStateDim + 1];
    for (std::int64_t t = 0; t < options.train_paths; ++t) {
      const ChainPath path = sampler.draw(rng);
      for (int n = 1; n <= N; ++n) {
        auto* idx = moving[static_cast<std::size_t>(n)].get();
        if (idx == nullptr) continue;
        const double K = static_cast<double>(chain.layers[static_cast<std::size_t>(n)].size());
        const double a = options.lr_a > 0.0 ? options.lr_a : K;
        const double b = options.lr_b > 0.0 ? options.lr_b : 100.0 * K;
        normalize(path.z[static_cast<std::size_t>(n)], path.s[static_cast<std::size_t>(n)],
                  idx->inv(), q);
        const std::size_t j = idx->nearest(q);
        idx->move_toward(j, q, a / (b + static_cast<double>(t)));
      }
    }
    for (int n = 1; n <= N; ++n) {
      if (auto* idx = moving[static_cast<std::size_t>(n)].get()) {
        idx->export_to(chain.layers[static_cast<std::size_t>(n)]);
      }
    }
  }

  auto estimate = estimate_transitions(sampler, chain.layers, options.p,
                                       options.estimation_paths, options.seed, options.threads);
  for (int n = 0; n <= N; ++n) {
    chain.layers[static_cast<std::size_t>(n)].weights =
        std::move(estimate.weights[static_cast<std::size_t>(n)]);
  }
  chain.transitions = std::move(estimate.transitions);
  chain.distortion_z = std::move(estimate.distortion_z);
  chain.distortion_s = std::move(estimate.distortion_s);
  chain.warnings = std::move(estimate.warnings);
  drop_dead_cells(chain);
  chain.check();
  return chain;
}

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

TransitionEstimate estimate_transitions(const ChainSampler& sampler,
                                        std::span<const LayerGrid> grids, double p,
                                        std::int64_t n_samples, std::uint64_t seed,
                                        int threads) {
  const int N = sampler.horizon;
  if (grids.size() != static_cast<std::size_t>(N) + 1) {
    throw ConfigError("estimate_transitions: need one grid per layer");
  }
  if (n_samples < 1) throw ConfigError("estimate_transitions: n_samples must be positive");
  std::vector<NearestCellIndex> index;
  index.reserve(grids.size());
  for (const auto& g : grids) index.emplace_back(g, p);

  const std::size_t layers = grids.size();
  std::vector<std::vector<std::uint64_t>> counts(layers);
  std::vector<std::vector<std::uint64_t>> pair_counts(layers > 0 ? layers - 1 : 0);
  for (std::size_t n = 0; n < layers; ++n) counts[n].assign(grids[n].size(), 0);
  for (std::size_t n = 0; n + 1 < layers; ++n) {
    pair_counts[n].assign(grids[n].size() * grids[n + 1].size(), 0);
  }
  std::vector<double> sum_z(layers, 0.0);
  std::vector<double> sum_s(layers, 0.0);

  struct ChunkResult {
    std::vector<std::uint32_t> cells;  // paths x layers
    std::vector<double> sum_z;
    std::vector<double> sum_s;
    std::size_t paths = 0;
  };
  const auto n_chunks = static_cast<std::size_t>((n_samples + kChunkPaths - 1) / kChunkPaths);
  const int workers = resolve_threads(threads);
  const std::size_t wave = static_cast<std::size_t>(workers);
  std::vector<ChunkResult> slots(wave);

  for (std::size_t first = 0; first < n_chunks; first += wave) {
    const std::size_t in_wave = std::min(wave, n_chunks - first);
    parallel_chunks(in_wave, workers, [&](std::size_t slot) {
      const std::size_t chunk = first + slot;
      const std::int64_t begin = static_cast<std::int64_t>(chunk) * kChunkPaths;
      const std::int64_t end = std::min(n_samples, begin + kChunkPaths);
      ChunkResult& r = slots[slot];
      r.paths = static_cast<std::size_t>(end - begin);
      r.cells.assign(r.paths * layers, 0);
      r.sum_z.assign(layers, 0.0);
      r.sum_s.assign(layers, 0.0);
      Rng rng = make_rng(seed, kEstimationStreamBase + chunk);
      for (std::size_t i = 0; i < r.paths; ++i) {
        const ChainPath path = sampler.draw(rng);
        for (std::size_t n = 0; n < layers; ++n) {
          const std::size_t cell = index[n].nearest(path.z[n], path.s[n]);
          r.cells[i * layers + n] = static_cast<std::uint32_t>(cell);
          const double dz = (path.z[n] - grids[n].z[cell]).norm();
          r.sum_z[n] += p_power(dz, p);
          r.sum_s[n] += p_power(path.s[n] - grids[n].s[cell], p);
        }
      }
    });
    for (std::size_t slot = 0; slot < in_wave; ++slot) {
      const ChunkResult& r = slots[slot];
      for (std::size_t i = 0; i < r.paths; ++i) {
        const std::uint32_t* cells = r.cells.data() + i * layers;
        for (std::size_t n = 0; n < layers; ++n) {
          ++counts[n][cells[n]];
          if (n + 1 < layers) ++pair_counts[n][cells[n] * grids[n + 1].size() + cells[n + 1]];
        }
      }
      for (std::size_t n = 0; n < layers; ++n) {
        sum_z[n] += r.sum_z[n];
        sum_s[n] += r.sum_s[n];
      }
    }
  }

  TransitionEstimate out;
  const double total = static_cast<double>(n_samples);
  for (std::size_t n = 0; n < layers; ++n) {
    if (static_cast<std::size_t>(n_samples) < grids[n].size()) {
      out.warnings.push_back("layer " + std::to_string(n) + ": " + std::to_string(n_samples) +
                             " samples for " + std::to_string(grids[n].size()) + " cells");
    }
    std::vector<double> w(grids[n].size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<double>(counts[n][i]) / total;
    out.weights.push_back(std::move(w));
    out.distortion_z.push_back(std::pow(sum_z[n] / total, 1.0 / p));
    out.distortion_s.push_back(std::pow(sum_s[n] / total, 1.0 / p));
  }
  for (std::size_t n = 0; n + 1 < layers; ++n) {
    const std::size_t rows = grids[n].size();
    const std::size_t cols = grids[n + 1].size();
    TransitionMatrix T;
    T.rows = rows;
    T.cols = cols;
    T.row_ptr.assign(1, 0);
    std::size_t empty_rows = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::uint64_t* row = pair_counts[n].data() + r * cols;
      const std::uint64_t row_total = counts[n][r];
      if (row_total == 0) {
        ++empty_rows;
        for (std::size_t c = 0; c < cols; ++c) {
          T.col.push_back(static_cast<std::uint32_t>(c));
          T.prob.push_back(1.0 / static_cast<double>(cols));
        }
      } else {
        for (std::size_t c = 0; c < cols; ++c) {
          if (row[c] == 0) continue;
          T.col.push_back(static_cast<std::uint32_t>(c));
          T.prob.push_back(static_cast<double>(row[c]) / static_cast<double>(row_total));
        }
      }
      T.row_ptr.push_back(T.col.size());
    }
    if (empty_rows > 0) {
      out.warnings.push_back("transition " + std::to_string(n) + ": " +
                             std::to_string(empty_rows) + " empty rows set uniform");
    }
    out.transitions.push_back(std::move(T));
  }
  return out;
}

void drop_dead_cells(QuantizedChain& chain) {
  const std::size_t layers = chain.layers.size();
  std::vector<std::vector<std::int64_t>> remap(layers);
  for (std::size_t n = 0; n < layers; ++n) {
    auto& g = chain.layers[n];
    remap[n].assign(g.size(), -1);
    LayerGrid kept;
    kept.index = g.index;
    kept.scale = g.scale;
    for (std::size_t i = 0; i < g.size(); ++i) {
      // Layer 0 is the exact start law and keeps every atom.
      if (n == 0 || g.weights[i] > 0.0) {
        remap[n][i] = static_cast<std::int64_t>(kept.size());
        kept.z.push_back(g.z[i]);
        kept.s.push_back(g.s[i]);
        kept.weights.push_back(g.weights[i]);
      }
    }
    if (kept.size() != g.size()) {
      chain.warnings.push_back("layer " + std::to_string(n) + ": dropped " +
                               std::to_string(g.size() - kept.size()) + " dead cells");
    }
    g = std::move(kept);
  }
  for (std::size_t n = 0; n + 1 < layers; ++n) {
    const auto& T = chain.transitions[n];
    TransitionMatrix R;
    R.rows = chain.layers[n].size();
    R.cols = chain.layers[n + 1].size();
    R.row_ptr.assign(1, 0);
    for (std::size_t r = 0; r < T.rows; ++r) {
      if (remap[n][r] < 0) continue;
      double mass = 0.0;
      const auto cols = T.row_cols(r);
      const auto probs = T.row_probs(r);
      for (std::size_t k = 0; k < cols.size(); ++k) {
        if (remap[n + 1][cols[k]] >= 0) mass += probs[k];
      }
      for (std::size_t k = 0; k < cols.size(); ++k) {
        const auto c = remap[n + 1][cols[k]];
        if (c < 0) continue;
        R.col.push_back(static_cast<std::uint32_t>(c));
        // Only uniform placeholder rows can lose mass here.
        R.prob.push_back(mass > 0.0 && mass != 1.0 ? probs[k] / mass : probs[k]);
      }
      R.row_ptr.push_back(R.col.size());
    }
    chain.transitions[n] = std::move(R);
  }
}

DistortionSample measure_distortion(const ChainSampler& sampler, const QuantizedChain& chain,
                                    std::int64_t n_samples, std::uint64_t seed) {
  if (sampler.horizon != chain.horizon()) {
    throw ConfigError("measure_distortion: sampler and chain horizons differ");
  }
  std::vector<NearestCellIndex> index;
  for (const auto& g : chain.layers) index.emplace_back(g, chain.p);
  const std::size_t layers = chain.layers.size();
  std::vector<double> sum(layers, 0.0);
  std::vector<double> sum_sq(layers, 0.0);
  Rng rng = make_rng(seed, kEstimationStreamBase - 1);
  for (std::int64_t i = 0; i < n_samples; ++i) {
    const ChainPath path = sampler.draw(rng);
    for (std::size_t n = 0; n < layers; ++n) {
      const std::size_t cell = index[n].nearest(path.z[n], path.s[n]);
      const double dz = (path.z[n] - chain.layers[n].z[cell]).norm();
      const double ds = path.s[n] - chain.layers[n].s[cell];
      const double e = p_power(std::sqrt(dz * dz + ds * ds), chain.p);
      sum[n] += e;
      sum_sq[n] += e * e;
    }
  }
  DistortionSample out;
  const double m = static_cast<double>(n_samples);
  for (std::size_t n = 0; n < layers; ++n) {
    const double mean = sum[n] / m;
    const double var = std::max(0.0, sum_sq[n] / m - mean * mean);
    out.mean.push_back(mean);
    out.std_error.push_back(std::sqrt(var / m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'P', 'D', 'M', 'P', 'Q', 'C', 'H', 'N'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  std::vector<unsigned char>& buffer() { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  Reader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}
  void need(std::size_t n) const {
    if (n > size_ - pos_) throw CorruptFileError("chain file truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t count(std::uint64_t limit) {
    const std::uint64_t n = u64();
    if (n > limit) throw CorruptFileError("chain file has an implausible size field");
    return static_cast<std::size_t>(n);
  }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint64_t fnv1a(const unsigned char* data, std::size_t n) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

nlohmann::json state_json(const State& x) {
  auto arr = nlohmann::json::array();
  for (Eigen::Index k = 0; k < x.size(); ++k) arr.push_back(x(k));
  return arr;
}

nlohmann::json start_json(const StartSpec& start) {
  nlohmann::json j;
  j["kind"] = start.label();
  if (start.kind == StartSpec::Kind::Fixed) {
    j["point"] = state_json(start.point);
  } else {
    auto arr = nlohmann::json::array();
    for (const auto& y : start.controls) arr.push_back(state_json(y));
    j["controls"] = arr;
  }
  return j;
}

void write_state(Writer& w, const State& x) {
  for (Eigen::Index k = 0; k < x.size(); ++k) w.f64(x(k));
}

State read_state(Reader& r, int dim) {
  State x(dim);
  for (int k = 0; k < dim; ++k) x(k) = r.f64();
  return x;
}

}  // namespace

void save_chain(const QuantizedChain& chain, const std::filesystem::path& path,
                const std::map<std::string, std::string>& meta) {
  chain.check();
  nlohmann::json header;
  header["format"] = "pdmp-quantized-chain";
  header["version"] = kChainFileVersion;
  header["p"] = chain.p;
  header["N"] = chain.horizon();
  header["state_dim"] = chain.state_dim;
  header["start_spec"] = start_json(chain.start);
  auto sizes = nlohmann::json::array();
  for (const auto& g : chain.layers) sizes.push_back(g.size());
  header["layer_sizes"] = sizes;
  if (!meta.empty()) header["meta"] = meta;

  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kChainFileVersion);
  w.str(header.dump());
  w.u32(static_cast<std::uint32_t>(chain.state_dim));
  w.f64(chain.p);
  w.u32(chain.start.kind == StartSpec::Kind::Fixed ? 0u : 1u);
  if (chain.start.kind == StartSpec::Kind::Fixed) {
    write_state(w, chain.start.point);
  } else {
    w.u64(chain.start.controls.size());
    for (const auto& y : chain.start.controls) write_state(w, y);
  }
  w.u64(chain.layers.size());
  for (std::size_t n = 0; n < chain.layers.size(); ++n) {
    const auto& g = chain.layers[n];
    w.u64(static_cast<std::uint64_t>(g.index));
    w.u64(g.size());
    for (const auto& z : g.z) write_state(w, z);
    for (double s : g.s) w.f64(s);
    for (double x : g.weights) w.f64(x);
    for (double x : g.scale) w.f64(x);
    w.f64(chain.distortion_z[n]);
    w.f64(chain.distortion_s[n]);
  }
  for (const auto& T : chain.transitions) {
    w.u64(T.rows);
    w.u64(T.cols);
    w.u64(T.col.size());
    for (auto v : T.row_ptr) w.u64(v);
    for (auto c : T.col) w.u32(c);
    for (double x : T.prob) w.f64(x);
  }
  w.u64(chain.warnings.size());
  for (const auto& s : chain.warnings) w.str(s);
  auto& buf = w.buffer();
  const std::uint64_t checksum = fnv1a(buf.data(), buf.size());
  w.u64(checksum);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

namespace {

// Whole file after the magic, version and checksum checks.
std::vector<unsigned char> read_checked(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < sizeof kMagic + 4 + 8) throw CorruptFileError("chain file truncated");
  if (!std::equal(kMagic, kMagic + sizeof kMagic, buf.begin())) {
    throw CorruptFileError("not a quantized chain file");
  }
  Reader head(buf.data() + sizeof kMagic, buf.size() - sizeof kMagic);
  const std::uint32_t version = head.u32();
  if (version != kChainFileVersion) {
    throw VersionMismatchError("chain file version " + std::to_string(version) +
                               ", expected " + std::to_string(kChainFileVersion));
  }
  const std::size_t body = buf.size() - 8;
  Reader tail(buf.data() + body, 8);
  if (fnv1a(buf.data(), body) != tail.u64()) {
    throw CorruptFileError("chain file checksum mismatch (corrupt or truncated)");
  }
  return buf;
}

}  // namespace

std::map<std::string, std::string> chain_file_meta(const std::filesystem::path& path) {
  const auto buf = read_checked(path);
  Reader r(buf.data() + sizeof kMagic + 4, buf.size() - 8 - sizeof kMagic - 4);
  const auto header = nlohmann::json::parse(r.str(), nullptr, false);
  std::map<std::string, std::string> out;
  if (header.is_object() && header.contains("meta") && header["meta"].is_object()) {
    for (const auto& [k, v] : header["meta"].items()) {
      if (v.is_string()) out[k] = v.get<std::string>();
    }
  }
  return out;
}

QuantizedChain load_chain(const std::filesystem::path& path) {
  const auto buf = read_checked(path);
  const std::size_t body = buf.size() - 8;
  Reader r(buf.data() + sizeof kMagic + 4, body - sizeof kMagic - 4);
  const std::uint64_t limit = buf.size();
  (void)r.str();  // JSON header, informational
  QuantizedChain chain;
  chain.state_dim = static_cast<int>(r.u32());
  if (chain.state_dim < 1 || chain.state_dim > kMaxStateDim) {
    throw CorruptFileError("chain file has a bad state dimension");
  }
  chain.p = r.f64();
  const std::uint32_t kind = r.u32();
  if (kind == 0) {
    chain.start = StartSpec::fixed(read_state(r, chain.state_dim));
  } else if (kind == 1) {
    const std::size_t u = r.count(limit);
    std::vector<State> controls;
    for (std::size_t i = 0; i < u; ++i) controls.push_back(read_state(r, chain.state_dim));
    chain.start = StartSpec::uniform_over(std::move(controls));
  } else {
    throw CorruptFileError("chain file has an unknown start kind");
  }
  const std::size_t layers = r.count(limit);
  if (layers == 0) throw CorruptFileError("chain file has no layers");
  for (std::size_t n = 0; n < layers; ++n) {
    LayerGrid g;
    g.index = static_cast<int>(r.u64());
    const std::size_t K = r.count(limit);
    for (std::size_t i = 0; i < K; ++i) g.z.push_back(read_state(r, chain.state_dim));
    for (std::size_t i = 0; i < K; ++i) g.s.push_back(r.f64());
    for (std::size_t i = 0; i < K; ++i) g.weights.push_back(r.f64());
    for (int k = 0; k <= chain.state_dim; ++k) g.scale.push_back(r.f64());
    chain.distortion_z.push_back(r.f64());
    chain.distortion_s.push_back(r.f64());
    chain.layers.push_back(std::move(g));
  }
  for (std::size_t n = 0; n + 1 < layers; ++n) {
    TransitionMatrix T;
    T.rows = r.count(limit);
    T.cols = r.count(limit);
    const std::size_t nnz = r.count(limit);
    for (std::size_t i = 0; i <= T.rows; ++i) T.row_ptr.push_back(r.u64());
    for (std::size_t i = 0; i < nnz; ++i) T.col.push_back(r.u32());
    for (std::size_t i = 0; i < nnz; ++i) T.prob.push_back(r.f64());
    chain.transitions.push_back(std::move(T));
  }
  const std::size_t n_warn = r.count(limit);
  for (std::size_t i = 0; i < n_warn; ++i) chain.warnings.push_back(r.str());
  if (r.remaining() != 0) throw CorruptFileError("chain file has trailing bytes");
  try {
    chain.check();
  } catch (const ConfigError& e) {
    throw CorruptFileError(std::string("chain file is inconsistent: ") + e.what());
  }
  return chain;
}

nlohmann::json chain_to_json(const QuantizedChain& chain) {
  nlohmann::json j;
  j["version"] = kChainFileVersion;
  j["p"] = chain.p;
  j["N"] = chain.horizon();
  j["state_dim"] = chain.state_dim;
  j["start_spec"] = start_json(chain.start);
  j["warnings"] = chain.warnings;
  auto layers = nlohmann::json::array();
  for (std::size_t n = 0; n < chain.layers.size(); ++n) {
    const auto& g = chain.layers[n];
    nlohmann::json L;
    L["index"] = g.index;
    auto z = nlohmann::json::array();
    for (const auto& x : g.z) z.push_back(state_json(x));
    L["z"] = z;
    L["s"] = g.s;
    L["weights"] = g.weights;
    L["scale"] = g.scale;
    L["distortion_z"] = chain.distortion_z[n];
    L["distortion_s"] = chain.distortion_s[n];
    layers.push_back(L);
  }
  j["layers"] = layers;
  auto trans = nlohmann::json::array();
  for (const auto& T : chain.transitions) {
    nlohmann::json t;
    t["rows"] = T.rows;
    t["cols"] = T.cols;
    t["row_ptr"] = T.row_ptr;
    t["col"] = T.col;
    t["prob"] = T.prob;
    trans.push_back(t);
  }
  j["transitions"] = trans;
  return j;
}

}  // namespace pdmp
