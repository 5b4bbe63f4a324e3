#include "horus/lora.hpp"

#include "horus/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace horus {

std::string_view layer_name(LayerId id) {
  return id == LayerId::FeatureFirst ? "feature_first" : "classifier";
}

void LoraPair::validate() const {
  if (a.rows() != b.cols())
    throw InvalidInput("LoraPair: A has " + std::to_string(a.rows()) + " rows but B has " +
                       std::to_string(b.cols()) + " columns");
  if (a.rows() < 1) throw InvalidInput("LoraPair: rank must be positive");
  if (!a.allFinite() || !b.allFinite()) throw InvalidInput("LoraPair: non-finite entry");
}

LayerShapes ClientUpdate::shapes() const {
  return {layers[0].dims(), layers[1].dims()};
}

bool GlobalState::directions_ready() const {
  for (const auto& l : layers)
    if (!l.direction_a || !l.direction_b) return false;
  return true;
}

GlobalState make_global_state(const LayerShapes& global_dims, int rank) {
  GlobalState g;
  for (int i = 0; i < kNumLayers; ++i) {
    g.layers[i].a = Matrix::Zero(rank, global_dims[i].d_in);
    g.layers[i].b = Matrix::Zero(global_dims[i].d_out, rank);
  }
  return g;
}

namespace {

void check_fits(LayerDims local, LayerDims global, LayerId id) {
  if (local.d_in > global.d_in || local.d_out > global.d_out)
    throw ConfigError("layer " + std::string(layer_name(id)) + ": local shape (" +
                      std::to_string(local.d_in) + ", " + std::to_string(local.d_out) +
                      ") exceeds global maximum (" + std::to_string(global.d_in) + ", " +
                      std::to_string(global.d_out) + ")");
}

}  // namespace

PaddedUpdate pad_to_global(const ClientUpdate& u, const LayerShapes& global_dims) {
  PaddedUpdate out;
  for (LayerId id : kLayers) {
    const int i = index_of(id);
    const LoraPair& pair = u.layers[i];
    const LayerDims g = global_dims[i];
    check_fits(pair.dims(), g, id);
    const int r = pair.rank();
    PaddedPair& p = out[i];
    p.a = Matrix::Zero(r, g.d_in);
    p.mask_a = Matrix::Zero(r, g.d_in);
    p.a.leftCols(pair.d_in()) = pair.a;
    p.mask_a.leftCols(pair.d_in()).setOnes();
    p.b = Matrix::Zero(g.d_out, r);
    p.mask_b = Matrix::Zero(g.d_out, r);
    p.b.topRows(pair.d_out()) = pair.b;
    p.mask_b.topRows(pair.d_out()).setOnes();
  }
  return out;
}

LoraPair trim_to_local(const GlobalState& g, LayerId layer, LayerDims local) {
  const GlobalLayer& gl = g.layer(layer);
  check_fits(local, {static_cast<int>(gl.a.cols()), static_cast<int>(gl.b.rows())}, layer);
  return LoraPair{gl.a.leftCols(local.d_in), gl.b.topRows(local.d_out)};
}

bool all_finite(const ClientUpdate& u) {
  return std::all_of(u.layers.begin(), u.layers.end(),
                     [](const LoraPair& p) { return p.a.allFinite() && p.b.allFinite(); });
}

bool all_finite(const GlobalState& g) {
  return std::all_of(g.layers.begin(), g.layers.end(),
                     [](const GlobalLayer& l) { return l.a.allFinite() && l.b.allFinite(); });
}

std::int64_t payload_bytes(const ClientUpdate& u) {
  std::int64_t entries = 0;
  for (const auto& l : u.layers) entries += l.a.size() + l.b.size();
  return entries * static_cast<std::int64_t>(sizeof(double));
}

FlatUpdate flatten(const PaddedUpdate& p) {
  Eigen::Index n = 0;
  for (const auto& l : p) n += l.a.size() + l.b.size();
  FlatUpdate f{Vector(n), Vector(n)};
  Eigen::Index off = 0;
  auto put = [&](const Matrix& m, const Matrix& mask) {
    f.values.segment(off, m.size()) = m.reshaped();
    f.mask.segment(off, m.size()) = mask.reshaped();
    off += m.size();
  };
  for (const auto& l : p) {
    put(l.a, l.mask_a);
    put(l.b, l.mask_b);
  }
  return f;
}

PaddedUpdate unflatten(const Vector& values, const PaddedUpdate& like) {
  PaddedUpdate out = like;
  Eigen::Index off = 0;
  auto take = [&](Matrix& m) {
    m = values.segment(off, m.size()).reshaped(m.rows(), m.cols());
    off += m.size();
  };
  for (auto& l : out) {
    take(l.a);
    take(l.b);
  }
  if (off != values.size()) throw InvalidInput("unflatten: length mismatch");
  return out;
}

ClientUpdate crop_to_client(const PaddedUpdate& p, const ClientUpdate& like) {
  ClientUpdate out = like;
  for (int i = 0; i < kNumLayers; ++i) {
    const LoraPair& own = like.layers[i];
    out.layers[i].a = p[i].a.leftCols(own.d_in());
    out.layers[i].b = p[i].b.topRows(own.d_out());
  }
  return out;
}

namespace {

void put_u64(std::ostream& os, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(bytes, 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char bytes[8];
  if (!is.read(reinterpret_cast<char*>(bytes), 8)) throw InvalidInput("read_update: truncated stream");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}

void put_matrix(std::ostream& os, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_u64(os, std::bit_cast<std::uint64_t>(m(r, c)));
}

Matrix get_matrix(std::istream& is, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = std::bit_cast<double>(get_u64(is));
  return m;
}

}  // namespace

void write_update(std::ostream& os, const ClientUpdate& u) {
  nlohmann::json header;
  header["client_id"] = u.client_id;
  header["arch_id"] = u.arch_id;
  header["layers"] = nlohmann::json::array();
  for (LayerId id : kLayers) {
    const LoraPair& p = u.layer(id);
    header["layers"].push_back({{"name", layer_name(id)},
                                {"a", {p.a.rows(), p.a.cols()}},
                                {"b", {p.b.rows(), p.b.cols()}}});
  }
  const std::string text = header.dump();
  put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : u.layers) {
    put_matrix(os, p.a);
    put_matrix(os, p.b);
  }
}

ClientUpdate read_update(std::istream& is) {
  const std::uint64_t len = get_u64(is);
  if (len > (1u << 20)) throw InvalidInput("read_update: implausible header length");
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw InvalidInput("read_update: truncated header");
  const auto header = nlohmann::json::parse(text);
  ClientUpdate u;
  u.client_id = header.at("client_id").get<int>();
  u.arch_id = header.at("arch_id").get<int>();
  const auto& layers = header.at("layers");
  if (layers.size() != kNumLayers) throw InvalidInput("read_update: expected two layers");
  for (int i = 0; i < kNumLayers; ++i) {
    const auto& l = layers[i];
    if (l.at("name").get<std::string>() != layer_name(kLayers[i]))
      throw InvalidInput("read_update: unexpected layer order");
    u.layers[i].a = get_matrix(is, l.at("a")[0].get<Eigen::Index>(), l.at("a")[1].get<Eigen::Index>());
    u.layers[i].b = get_matrix(is, l.at("b")[0].get<Eigen::Index>(), l.at("b")[1].get<Eigen::Index>());
    u.layers[i].validate();
  }
  return u;
}

}  // namespace horus
