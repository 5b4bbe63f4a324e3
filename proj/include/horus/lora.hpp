#pragma once

#include "horus/spectral.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>

namespace horus {

// The two instrumented layers every client carries.
enum class LayerId : int { FeatureFirst = 0, Classifier = 1 };
inline constexpr int kNumLayers = 2;
inline constexpr std::array<LayerId, kNumLayers> kLayers{LayerId::FeatureFirst, LayerId::Classifier};

std::string_view layer_name(LayerId id);
inline constexpr int index_of(LayerId id) { return static_cast<int>(id); }

struct LayerDims {
  int d_in = 0;
  int d_out = 0;
  bool operator==(const LayerDims&) const = default;
};
using LayerShapes = std::array<LayerDims, kNumLayers>;

// One layer's low-rank update, delta W = b * a.
struct LoraPair {
  Matrix a;  // rank x d_in
  Matrix b;  // d_out x rank

  int rank() const { return static_cast<int>(a.rows()); }
  int d_in() const { return static_cast<int>(a.cols()); }
  int d_out() const { return static_cast<int>(b.rows()); }
  LayerDims dims() const { return {d_in(), d_out()}; }

  // Throws InvalidInput when a and b disagree on rank or hold non-finite values.
  void validate() const;
};

struct ClientUpdate {
  int client_id = 0;
  int arch_id = 0;
  std::array<LoraPair, kNumLayers> layers;

  const LoraPair& layer(LayerId id) const { return layers[index_of(id)]; }
  LoraPair& layer(LayerId id) { return layers[index_of(id)]; }
  LayerShapes shapes() const;
};

// A LoRA pair zero-padded (top-left anchored) to the global maximum shape with 0/1 masks.
struct PaddedPair {
  Matrix a;
  Matrix b;
  Matrix mask_a;
  Matrix mask_b;
};
using PaddedUpdate = std::array<PaddedPair, kNumLayers>;

struct GlobalLayer {
  Matrix a;  // rank x d_in_max
  Matrix b;  // d_out_max x rank
  std::optional<Vector> direction_a;  // unit, length d_in_max
  std::optional<Vector> direction_b;  // unit, length rank
};

struct GlobalState {
  std::array<GlobalLayer, kNumLayers> layers;
  int round_index = 0;

  const GlobalLayer& layer(LayerId id) const { return layers[index_of(id)]; }
  GlobalLayer& layer(LayerId id) { return layers[index_of(id)]; }
  bool directions_ready() const;
};

/// All-zero global state at the given maximum shapes.
GlobalState make_global_state(const LayerShapes& global_dims, int rank);

PaddedUpdate pad_to_global(const ClientUpdate& u, const LayerShapes& global_dims);

/// Top-left d_in columns of the global A and top d_out rows of the global B.
LoraPair trim_to_local(const GlobalState& g, LayerId layer, LayerDims local);

/// 8 bytes per matrix entry over both layers' A and B.
std::int64_t payload_bytes(const ClientUpdate& u);

bool all_finite(const ClientUpdate& u);
bool all_finite(const GlobalState& g);

// Flattened view of a padded update: FeatureFirst A, FeatureFirst B, Classifier A, Classifier B,
// each in Eigen (column-major) storage order. `mask` holds 1 on real entries.
struct FlatUpdate {
  Vector values;
  Vector mask;
};

FlatUpdate flatten(const PaddedUpdate& p);

/// Inverse of flatten() for values; shapes and masks are taken from `like`.
PaddedUpdate unflatten(const Vector& values, const PaddedUpdate& like);

/// Crops a padded update back to a client's own shapes.
ClientUpdate crop_to_client(const PaddedUpdate& p, const ClientUpdate& like);

// Binary log format: u64 little-endian header length, JSON header, then float64 little-endian
// entries of FeatureFirst A, FeatureFirst B, Classifier A, Classifier B in row-major order.
void write_update(std::ostream& os, const ClientUpdate& u);
ClientUpdate read_update(std::istream& is);

}  // namespace horus
