// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cib/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "cib/common/binary_io.hpp"
#include "cib/nn/random.hpp"

namespace cib::data {

using io::FieldError;

namespace {

int& split_count(ConfoundedSpec& s, SplitId id) {
  switch (id) {
    case SplitId::train: return s.n_train;
    case SplitId::val_iid: return s.n_val_iid;
    case SplitId::test_iid: return s.n_test_iid;
    case SplitId::val_ood: return s.n_val_ood;
    case SplitId::test_ood: return s.n_test_ood;
  }
  return s.n_train;
}

int split_count(const ConfoundedSpec& s, SplitId id) { return split_count(const_cast<ConfoundedSpec&>(s), id); }

bool is_ood(SplitId s) { return s == SplitId::val_ood || s == SplitId::test_ood; }

// Class prototypes: signed axis directions while they stay distinct, random
// Gaussian directions otherwise.
std::vector<double> prototypes(int k, int dim, double separation, std::uint64_t seed) {
  std::vector<double> p(static_cast<std::size_t>(k * dim), 0.0);
  if (2 * dim >= k) {
    for (int c = 0; c < k; ++c) {
      const double sign = c < dim ? 1.0 : -1.0;
      p[static_cast<std::size_t>(c * dim + c % dim)] = sign * separation;
    }
    return p;
  }
  nn::Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int c = 0; c < k; ++c) {
    double norm = 0.0;
    for (int j = 0; j < dim; ++j) {
      double& v = p[static_cast<std::size_t>(c * dim + j)];
      v = n(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (int j = 0; j < dim; ++j) p[static_cast<std::size_t>(c * dim + j)] *= separation / norm;
  }
  return p;
}

void render_image(const ConfoundedSpec& spec, const double* zr, const double* zs, float* out) {
  const int C = spec.channels, H = spec.height, W = spec.width;
  const int top = H / 4, bottom = H - H / 4, left = W / 4, right = W - W / 4;
  const int dr = spec.invariant_dim, ds = spec.nuisance_dim;
  // Bumps on a grid inside the central square.
  const int grid = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(dr))));
  const double sigma = std::max(1.0, H / 16.0);
  const int bands = (ds + C - 1) / C;
  const int band_h = std::max(1, H / std::max(1, 2 * bands));
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const bool centre = y >= top && y < bottom && x >= left && x < right;
      double fg = 0.0;
      if (centre) {
        for (int j = 0; j < dr; ++j) {
          const double cy = top + (j / grid + 0.5) * (bottom - top) / grid;
          const double cx = left + (j % grid + 0.5) * (right - left) / grid;
          const double d2 = (y + 0.5 - cy) * (y + 0.5 - cy) + (x + 0.5 - cx) * (x + 0.5 - cx);
          fg += zr[j] * std::exp(-d2 / (2.0 * sigma * sigma));
        }
      }
      for (int c = 0; c < C; ++c) {
        double v = fg;
        if (!centre) {
          const int band = (y / band_h) % bands;
          for (int j = c; j < ds; j += C)
            if (j / C == band) v += zs[j];
        }
        out[(static_cast<std::size_t>(c) * H + y) * W + x] = static_cast<float>(v);
      }
    }
  }
}

Split generate_split(const ConfoundedSpec& spec, SplitId id, const std::vector<double>& inv_proto,
                     const std::vector<double>& nui_proto, std::uint64_t seed) {
  const int K = spec.num_classes, dr = spec.invariant_dim, ds = spec.nuisance_dim;
  const std::size_t n = static_cast<std::size_t>(split_count(spec, id));
  const double rho = is_ood(id) ? spec.ood_correlation : spec.train_correlation;
  nn::Rng rng(nn::derive_seed(seed, "split", static_cast<std::uint64_t>(id)));
  std::normal_distribution<double> noise(0.0, spec.noise_std);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> any_class(0, K - 1);

  Split s;
  s.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.labels[i] = static_cast<std::uint16_t>(i % static_cast<std::size_t>(K));
  std::shuffle(s.labels.begin(), s.labels.end(), rng);
  s.nuisance_class.resize(n);
  s.z_r.resize(n * static_cast<std::size_t>(dr));
  s.z_s.resize(n * static_cast<std::size_t>(ds));
  const std::size_t numel = spec.sample_numel();
  s.inputs.resize(n * numel);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = s.labels[i];
    int nc = any_class(rng);
    if (u01(rng) < std::abs(rho)) nc = rho >= 0.0 ? y : (y + 1) % K;
    s.nuisance_class[i] = static_cast<std::uint16_t>(nc);
    double* zr = s.z_r.data() + i * static_cast<std::size_t>(dr);
    double* zs = s.z_s.data() + i * static_cast<std::size_t>(ds);
    for (int j = 0; j < dr; ++j) zr[j] = inv_proto[static_cast<std::size_t>(y * dr + j)] + noise(rng);
    for (int j = 0; j < ds; ++j) zs[j] = nui_proto[static_cast<std::size_t>(nc * ds + j)] + noise(rng);
    float* x = s.inputs.data() + i * numel;
    if (spec.render == RenderKind::vector) {
      for (int j = 0; j < dr; ++j) x[j] = static_cast<float>(zr[j]);
      for (int j = 0; j < ds; ++j) x[dr + j] = static_cast<float>(zs[j]);
    } else {
      render_image(spec, zr, zs, x);
    }
  }
  return s;
}

}  // namespace

void ConfoundedSpec::validate() const {
  auto positive = [](const char* f, long v) {
    if (v < 1) throw FieldError(f, "must be >= 1, got " + std::to_string(v));
  };
  if (num_classes < 2) throw FieldError("num_classes", "must be >= 2, got " + std::to_string(num_classes));
  if (num_classes > 65535) throw FieldError("num_classes", "must fit in 16 bits");
  positive("invariant_dim", invariant_dim);
  positive("nuisance_dim", nuisance_dim);
  if (!(std::abs(train_correlation) <= 1.0)) {
    throw FieldError("train_correlation", "must be in [-1, 1], got " + io::format_double(train_correlation));
  }
  if (!(std::abs(ood_correlation) <= 1.0)) {
    throw FieldError("ood_correlation", "must be in [-1, 1], got " + io::format_double(ood_correlation));
  }
  positive("n_train", n_train);
  positive("n_val_iid", n_val_iid);
  positive("n_test_iid", n_test_iid);
  positive("n_val_ood", n_val_ood);
  positive("n_test_ood", n_test_ood);
  if (!(noise_std >= 0.0)) throw FieldError("noise_std", "must be >= 0");
  if (!(invariant_separation > 0.0)) throw FieldError("invariant_separation", "must be > 0");
  if (!(nuisance_separation >= 0.0)) throw FieldError("nuisance_separation", "must be >= 0");
  if (render == RenderKind::image) {
    positive("channels", channels);
    if (height < 4 || height > 64) throw FieldError("height", "must be in [4, 64]");
    if (width < 4 || width > 64) throw FieldError("width", "must be in [4, 64]");
  }
}

ad::Shape ConfoundedSpec::sample_shape() const {
  if (render == RenderKind::vector) return {static_cast<std::size_t>(invariant_dim + nuisance_dim)};
  return {static_cast<std::size_t>(channels), static_cast<std::size_t>(height), static_cast<std::size_t>(width)};
}

void ConfoundedSpec::apply(const std::vector<io::KvEntry>& entries) {
  auto as_int = [](const io::KvEntry& e) {
    const auto v = io::parse_int(e.key, e.value);
    if (v < 0 || v > 100000000) throw FieldError(e.key, "out of range: " + e.value);
    return static_cast<int>(v);
  };
  for (const auto& e : entries) {
    const auto& k = e.key;
    if (k == "num_classes") num_classes = as_int(e);
    else if (k == "invariant_dim") invariant_dim = as_int(e);
    else if (k == "nuisance_dim") nuisance_dim = as_int(e);
    else if (k == "train_correlation") train_correlation = io::parse_double(k, e.value);
    else if (k == "ood_correlation") ood_correlation = io::parse_double(k, e.value);
    else if (k == "n_train") n_train = as_int(e);
    else if (k == "n_val_iid") n_val_iid = as_int(e);
    else if (k == "n_test_iid") n_test_iid = as_int(e);
    else if (k == "n_val_ood") n_val_ood = as_int(e);
    else if (k == "n_test_ood") n_test_ood = as_int(e);
    else if (k == "noise_std") noise_std = io::parse_double(k, e.value);
    else if (k == "invariant_separation") invariant_separation = io::parse_double(k, e.value);
    else if (k == "nuisance_separation") nuisance_separation = io::parse_double(k, e.value);
    else if (k == "render") {
      if (e.value == "vector") render = RenderKind::vector;
      else if (e.value == "image") render = RenderKind::image;
      else throw FieldError(k, "expected vector or image, got '" + e.value + "'");
    }
    else if (k == "channels") channels = as_int(e);
    else if (k == "height") height = as_int(e);
    else if (k == "width") width = as_int(e);
    else throw FieldError(k, "unknown key");
  }
}

std::string ConfoundedSpec::to_kv() const {
  std::ostringstream os;
  os << "num_classes = " << num_classes << '\n'
     << "invariant_dim = " << invariant_dim << '\n'
     << "nuisance_dim = " << nuisance_dim << '\n'
     << "train_correlation = " << io::format_double(train_correlation) << '\n'
     << "ood_correlation = " << io::format_double(ood_correlation) << '\n'
     << "n_train = " << n_train << '\n'
     << "n_val_iid = " << n_val_iid << '\n'
     << "n_test_iid = " << n_test_iid << '\n'
     << "n_val_ood = " << n_val_ood << '\n'
     << "n_test_ood = " << n_test_ood << '\n'
     << "noise_std = " << io::format_double(noise_std) << '\n'
     << "invariant_separation = " << io::format_double(invariant_separation) << '\n'
     << "nuisance_separation = " << io::format_double(nuisance_separation) << '\n'
     << "render = " << (render == RenderKind::vector ? "vector" : "image") << '\n'
     << "channels = " << channels << '\n'
     << "height = " << height << '\n'
     << "width = " << width << '\n';
  return os.str();
}

ConfoundedSpec load_spec(const std::string& path) {
  ConfoundedSpec s;
  s.apply(io::load_kv(path));
  s.validate();
  return s;
}

const char* split_name(SplitId s) {
  switch (s) {
    case SplitId::train: return "train";
    case SplitId::val_iid: return "val_iid";
    case SplitId::test_iid: return "test_iid";
    case SplitId::val_ood: return "val_ood";
    case SplitId::test_ood: return "test_ood";
  }
  return "?";
}

SplitId parse_split(const std::string& name) {
  for (SplitId s : kAllSplits)
    if (name == split_name(s)) return s;
  throw FieldError("split", "unknown split '" + name + "'");
}

bool DatasetBundle::same_payload(const DatasetBundle& o) const {
  if (seed != o.seed || spec.to_kv() != o.spec.to_kv()) return false;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    const auto& a = splits[i];
    const auto& b = o.splits[i];
    if (a.labels != b.labels || a.inputs.size() != b.inputs.size()) return false;
    if (std::memcmp(a.inputs.data(), b.inputs.data(), a.inputs.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

DatasetBundle gen_confounded(const ConfoundedSpec& spec, std::uint64_t seed) {
  spec.validate();
  DatasetBundle b;
  b.spec = spec;
  b.seed = seed;
  const auto inv = prototypes(spec.num_classes, spec.invariant_dim, spec.invariant_separation,
                              nn::derive_seed(seed, "invariant-prototypes"));
  const auto nui = prototypes(spec.num_classes, spec.nuisance_dim, spec.nuisance_separation,
                              nn::derive_seed(seed, "nuisance-prototypes"));
  for (SplitId s : kAllSplits) b.split(s) = generate_split(spec, s, inv, nui, seed);
  return b;
}

double label_nuisance_agreement(const Split& s, int num_classes) {
  if (s.nuisance_class.size() != s.size() || s.size() == 0) {
    throw std::invalid_argument("label_nuisance_agreement: split has no nuisance latents");
  }
  std::size_t agree = 0;
  for (std::size_t i = 0; i < s.size(); ++i) agree += s.labels[i] == s.nuisance_class[i];
  const double p = static_cast<double>(agree) / static_cast<double>(s.size());
  return (num_classes * p - 1.0) / (num_classes - 1.0);
}

ad::Tensor gather_inputs(const Split& s, const ad::Shape& sample_shape, const std::vector<std::size_t>& indices) {
  const std::size_t numel = ad::shape_numel(sample_shape);
  std::vector<double> v(indices.size() * numel);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= s.size()) throw std::out_of_range("gather_inputs: index out of range");
    const float* src = s.inputs.data() + indices[r] * numel;
    std::copy(src, src + numel, v.begin() + static_cast<std::ptrdiff_t>(r * numel));
  }
  ad::Shape shape{indices.size()};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  return ad::Tensor::from(std::move(shape), std::move(v));
}

ad::Tensor one_hot(const std::vector<std::uint16_t>& labels, const std::vector<std::size_t>& indices,
                   int num_classes) {
  const std::size_t k = static_cast<std::size_t>(num_classes);
  std::vector<double> v(indices.size() * k, 0.0);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t y = labels.at(indices[r]);
    if (y >= k) throw std::out_of_range("one_hot: label out of range");
    v[r * k + y] = 1.0;
  }
  return ad::Tensor::from({indices.size(), k}, std::move(v));
}

std::vector<float> shift_image(const float* img, const ImageShape& shape, int dy, int dx) {
  const int H = static_cast<int>(shape.height), W = static_cast<int>(shape.width);
  std::vector<float> out(shape.channels * shape.height * shape.width, 0.0f);
  for (std::size_t c = 0; c < shape.channels; ++c)
    for (int y = 0; y < H; ++y) {
      const int sy = y - dy;
      if (sy < 0 || sy >= H) continue;
      for (int x = 0; x < W; ++x) {
        const int sx = x - dx;
        if (sx < 0 || sx >= W) continue;
        out[(c * shape.height + static_cast<std::size_t>(y)) * shape.width + static_cast<std::size_t>(x)] =
            img[(c * shape.height + static_cast<std::size_t>(sy)) * shape.width + static_cast<std::size_t>(sx)];
      }
    }
  return out;
}

std::vector<float> translate_perturb(const std::vector<float>& images, std::size_t count, const ImageShape& shape,
                                     double level, std::uint64_t seed, std::vector<Offset>* offsets) {
  if (!(level >= 0.0 && level < 1.0)) throw FieldError("level", "must be in [0, 1)");
  const std::size_t numel = shape.channels * shape.height * shape.width;
  if (numel == 0 || images.size() != count * numel) {
    throw std::invalid_argument("translate_perturb: image buffer does not match count x C x H x W");
  }
  const int max_y = static_cast<int>(std::lround(level * static_cast<double>(shape.height)));
  const int max_x = static_cast<int>(std::lround(level * static_cast<double>(shape.width)));
  nn::Rng rng(seed);
  std::uniform_int_distribution<int> oy(-max_y, max_y), ox(-max_x, max_x);
  std::vector<float> out(images.size());
  if (offsets) offsets->clear();
  for (std::size_t i = 0; i < count; ++i) {
    const Offset o{oy(rng), ox(rng)};
    if (offsets) offsets->push_back(o);
    const float* src = images.data() + i * numel;
    if (o.dy == 0 && o.dx == 0) {
      std::copy(src, src + numel, out.begin() + static_cast<std::ptrdiff_t>(i * numel));
      continue;
    }
    const auto shifted = shift_image(src, shape, o.dy, o.dx);
    std::copy(shifted.begin(), shifted.end(), out.begin() + static_cast<std::ptrdiff_t>(i * numel));
  }
  return out;
}

void translate_perturb_split(DatasetBundle& bundle, SplitId s, double level, std::uint64_t seed) {
  if (bundle.spec.render != RenderKind::image) {
    throw std::invalid_argument("translate_perturb: bundle holds vector inputs, not images");
  }
  const ImageShape shape{static_cast<std::size_t>(bundle.spec.channels), static_cast<std::size_t>(bundle.spec.height),
                         static_cast<std::size_t>(bundle.spec.width)};
  auto& split = bundle.split(s);
  split.inputs = translate_perturb(split.inputs, split.size(), shape, level, seed);
}

std::vector<std::size_t> sample_context_indices(std::size_t pool, std::size_t n, std::uint64_t seed) {
  if (n > pool) {
    throw std::invalid_argument("sample_context: requested " + std::to_string(n) + " contexts from a pool of " +
                                std::to_string(pool));
  }
  nn::Rng rng(seed);
  // Partial Fisher-Yates over a sparse permutation.
  std::vector<std::size_t> out(n);
  std::vector<std::pair<std::size_t, std::size_t>> swaps;
  auto lookup = [&](std::size_t i) {
    for (auto it = swaps.rbegin(); it != swaps.rend(); ++it)
      if (it->first == i) return it->second;
    return i;
  };
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool - 1);
    const std::size_t j = pick(rng);
    const std::size_t vi = lookup(i), vj = lookup(j);
    out[i] = vj;
    swaps.emplace_back(j, vi);
    swaps.emplace_back(i, vj);
  }
  return out;
}

// ---- bundle files ----

namespace {

constexpr char kMagic[4] = {'C', 'I', 'B', 'D'};

}  // namespace

void write_bundle(std::ostream& os, const DatasetBundle& b) {
  const auto& s = b.spec;
  os.write(kMagic, 4);
  io::put_u32(os, kBundleVersion);
  io::put_u32(os, static_cast<std::uint32_t>(s.render));
  io::put_u32(os, static_cast<std::uint32_t>(s.channels));
  io::put_u32(os, static_cast<std::uint32_t>(s.height));
  io::put_u32(os, static_cast<std::uint32_t>(s.width));
  io::put_u32(os, static_cast<std::uint32_t>(s.num_classes));
  io::put_u32(os, static_cast<std::uint32_t>(s.invariant_dim));
  io::put_u32(os, static_cast<std::uint32_t>(s.nuisance_dim));
  for (double v : {s.train_correlation, s.ood_correlation, s.noise_std, s.invariant_separation, s.nuisance_separation})
    io::put_f64(os, v);
  io::put_u64(os, b.seed);
  for (SplitId id : kAllSplits) io::put_u32(os, static_cast<std::uint32_t>(b.split(id).size()));
  for (SplitId id : kAllSplits) {
    const Split& sp = b.split(id);
    for (float v : sp.inputs) io::put_f32(os, v);
    for (std::uint16_t l : sp.labels) io::put_u16(os, l);
  }
  if (!os) throw BundleFormatError("bundle write failed");
}

DatasetBundle read_bundle(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4)) throw io::TruncatedError("truncated payload while reading bundle magic");
  if (!std::equal(magic, magic + 4, kMagic)) throw BundleFormatError("not a dataset bundle (bad magic bytes)");
  const std::uint32_t version = io::get_u32(is, "bundle version");
  if (version != kBundleVersion) {
    throw UnsupportedVersionError("unsupported bundle version " + std::to_string(version) + " (expected " +
                                  std::to_string(kBundleVersion) + ")");
  }
  DatasetBundle b;
  auto& s = b.spec;
  const std::uint32_t render = io::get_u32(is, "render kind");
  if (render > 1) throw BundleFormatError("unknown render kind " + std::to_string(render));
  s.render = static_cast<RenderKind>(render);
  s.channels = static_cast<int>(io::get_u32(is, "channels"));
  s.height = static_cast<int>(io::get_u32(is, "height"));
  s.width = static_cast<int>(io::get_u32(is, "width"));
  s.num_classes = static_cast<int>(io::get_u32(is, "num_classes"));
  s.invariant_dim = static_cast<int>(io::get_u32(is, "invariant_dim"));
  s.nuisance_dim = static_cast<int>(io::get_u32(is, "nuisance_dim"));
  s.train_correlation = io::get_f64(is, "train_correlation");
  s.ood_correlation = io::get_f64(is, "ood_correlation");
  s.noise_std = io::get_f64(is, "noise_std");
  s.invariant_separation = io::get_f64(is, "invariant_separation");
  s.nuisance_separation = io::get_f64(is, "nuisance_separation");
  b.seed = io::get_u64(is, "seed");
  for (SplitId id : kAllSplits) split_count(s, id) = static_cast<int>(io::get_u32(is, "split count"));
  try {
    s.validate();
  } catch (const FieldError& e) {
    throw BundleFormatError(std::string("malformed bundle header: ") + e.what());
  }
  const std::size_t numel = s.sample_numel();
  for (SplitId id : kAllSplits) {
    Split& sp = b.split(id);
    const std::size_t n = static_cast<std::size_t>(split_count(s, id));
    sp.inputs.resize(n * numel);
    for (auto& v : sp.inputs) v = io::get_f32(is, "split inputs");
    sp.labels.resize(n);
    for (auto& l : sp.labels) {
      l = io::get_u16(is, "split labels");
      if (l >= s.num_classes) throw BundleFormatError("label out of range in split " + std::string(split_name(id)));
    }
  }
  return b;
}

void save_bundle(const std::filesystem::path& path, const DatasetBundle& b) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw BundleFormatError("cannot open " + tmp.string() + " for writing");
    write_bundle(os, b);
  }
  std::filesystem::rename(tmp, path);
}

DatasetBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw BundleFormatError("cannot open bundle " + path.string());
  DatasetBundle b = read_bundle(is);
  if (is.peek() != std::char_traits<char>::eof()) throw BundleFormatError("trailing bytes after bundle payload");
  return b;
}

}  // namespace cib::data
