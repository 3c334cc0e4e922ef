#pragma once

// Marginal quantization of the embedded chain Theta_n = (Z_n, S_n): one grid
// per layer trained by competitive learning (CLVQ), then weights, layer to
// layer transition matrices and L_p distortions estimated on a fresh batch.

#include "pdmp_impulse/core.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace pdmp {

class CorruptFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VersionMismatchError : public CorruptFileError {
 public:
  using CorruptFileError::CorruptFileError;
};

struct StartSpec {
  enum class Kind { Fixed, UniformOverControls };
  Kind kind = Kind::Fixed;
  State point;                  // Fixed
  std::vector<State> controls;  // UniformOverControls

  static StartSpec fixed(State x0);
  static StartSpec uniform_over(std::vector<State> controls);
  std::string label() const;
};

/// One quantization grid. Cell i is the pair (z[i], s[i]).
struct LayerGrid {
  int index = 0;
  std::vector<State> z;
  std::vector<double> s;
  std::vector<double> weights;
  /// Per-component standard deviations (d + 1 entries) used to normalize
  /// distances; centroids themselves are stored unscaled.
  std::vector<double> scale;

  std::size_t size() const { return s.size(); }
};

/// Row-stochastic matrix in compressed sparse row form.
struct TransitionMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint64_t> row_ptr;  // rows + 1 entries
  std::vector<std::uint32_t> col;
  std::vector<double> prob;

  std::span<const std::uint32_t> row_cols(std::size_t r) const {
    return {col.data() + row_ptr[r], col.data() + row_ptr[r + 1]};
  }
  std::span<const double> row_probs(std::size_t r) const {
    return {prob.data() + row_ptr[r], prob.data() + row_ptr[r + 1]};
  }
  double at(std::size_t r, std::size_t c) const;
  /// Builds from dense row-major rows; zeros are dropped.
  static TransitionMatrix from_dense(const std::vector<std::vector<double>>& dense);
  std::vector<std::vector<double>> to_dense() const;
};

struct QuantizedChain {
  int state_dim = 1;
  double p = 2.0;
  StartSpec start;
  std::vector<LayerGrid> layers;               // n = 0..N
  std::vector<TransitionMatrix> transitions;   // n -> n+1, N entries
  std::vector<double> distortion_z;            // ||Z_n - Zhat_n||_p
  std::vector<double> distortion_s;            // ||S_n - Shat_n||_p
  std::vector<std::string> warnings;

  int horizon() const { return static_cast<int>(layers.size()) - 1; }
  /// First N + 1 layers; throws ConfigError if N exceeds the horizon.
  QuantizedChain truncated(int N) const;
  /// Throws ConfigError on any structural inconsistency.
  void check() const;
  bool operator==(const QuantizedChain& other) const;
};

/// Draws one path Z_0..Z_N, S_0..S_N.
struct ChainSampler {
  std::function<ChainPath(Rng&)> draw;
  int horizon = 0;
  int state_dim = 1;
  StartSpec start;
};

ChainSampler make_chain_sampler(std::shared_ptr<const PdmpModel> model, StartSpec start,
                                int horizon);

/// Nearest grid cell for the normalized p-norm distance; ties go to the
/// smallest index. Throws ConfigError on an empty grid.
std::size_t project(const State& z, double s, const LayerGrid& grid, double p = 2.0);

/// Exact nearest-cell search that prunes on the first normalized coordinate.
/// Returns the same index as `project`, including tie breaking.
class NearestCellIndex {
 public:
  NearestCellIndex() = default;
  NearestCellIndex(const LayerGrid& grid, double p);
  std::size_t nearest(const State& z, double s) const;

 private:
  double distance(std::size_t cell, const double* q) const;

  int dim_ = 0;  // d + 1
  double p_ = 2.0;
  std::vector<double> inv_scale_;
  std::vector<double> points_;        // normalized, sorted by first coordinate
  std::vector<std::size_t> order_;    // sorted position -> cell index
};

struct QuantizerOptions {
  std::vector<int> layer_sizes;  // N + 1 entries, or one entry applied to every layer
  std::int64_t train_paths = 1'000'000;
  std::int64_t estimation_paths = 1'000'000;
  std::int64_t pilot_paths = 10'000;
  double p = 2.0;
  /// Step gamma_t = lr_a / (lr_b + t); nonpositive means K and 100 K.
  double lr_a = 0.0;
  double lr_b = 0.0;
  std::uint64_t seed = 1;
  int threads = 1;
};

/// Trains grids by CLVQ and estimates weights, transitions and distortions.
/// Layers whose start law is atomic (layer 0) are represented exactly.
QuantizedChain train_clvq(const ChainSampler& sampler, const QuantizerOptions& options);

struct TransitionEstimate {
  std::vector<std::vector<double>> weights;
  std::vector<TransitionMatrix> transitions;
  std::vector<double> distortion_z;
  std::vector<double> distortion_s;
  std::vector<std::string> warnings;
};

/// Empirical cell weights, row-normalized transition counts and distortions
/// from n_samples fresh paths. Empty rows become uniform rows and are flagged.
TransitionEstimate estimate_transitions(const ChainSampler& sampler,
                                        std::span<const LayerGrid> grids, double p,
                                        std::int64_t n_samples, std::uint64_t seed,
                                        int threads = 1);

/// Removes zero-weight cells and the matching transition rows and columns.
void drop_dead_cells(QuantizedChain& chain);

/// Mean and standard error of |Theta_n - Thetahat_n|^p per layer on a fresh
/// batch; used to validate stored distortions.
struct DistortionSample {
  std::vector<double> mean;
  std::vector<double> std_error;
};
DistortionSample measure_distortion(const ChainSampler& sampler, const QuantizedChain& chain,
                                    std::int64_t n_samples, std::uint64_t seed);

inline constexpr std::uint32_t kChainFileVersion = 1;

/// Binary chain file with a JSON header; `meta` is stored in the header
/// only and does not affect the loaded chain.
void save_chain(const QuantizedChain& chain, const std::filesystem::path& path,
                const std::map<std::string, std::string>& meta = {});
/// Throws CorruptFileError (VersionMismatchError for other versions).
QuantizedChain load_chain(const std::filesystem::path& path);
std::map<std::string, std::string> chain_file_meta(const std::filesystem::path& path);
nlohmann::json chain_to_json(const QuantizedChain& chain);

}  // namespace pdmp
