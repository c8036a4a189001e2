#include "metasd/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "metasd/rng.hpp"

namespace metasd {

std::size_t PruneMask::zero_count() const {
  std::size_t n = 0;
  for (const auto& b : bits)
    n += static_cast<std::size_t>((b.array() == 0.0).count());
  return n;
}

std::size_t PruneMask::total_count() const {
  std::size_t n = 0;
  for (const auto& b : bits)
    n += static_cast<std::size_t>(b.size());
  return n;
}

bool PruneMask::congruent_with(const ParamStore& params) const {
  if (bits.size() != params.tensors.size())
    return false;
  for (std::size_t t = 0; t < bits.size(); ++t)
    if (bits[t].rows() != params.tensors[t].data.rows() ||
        bits[t].cols() != params.tensors[t].data.cols())
      return false;
  return true;
}

namespace {

void check_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw ConfigError("pruning rate gamma must be in [0, 1)");
}

PruneMask ones_like(const ParamStore& params) {
  PruneMask m;
  m.bits.reserve(params.tensors.size());
  for (const Tensor& t : params.tensors)
    m.bits.push_back(MatrixRM::Ones(t.data.rows(), t.data.cols()));
  return m;
}

// Zeroes the k smallest-|w| entries among the given (tensor, flat) range,
// ties broken by ascending global flat index.
void prune_smallest(const ParamStore& params, PruneMask& mask,
                    const std::vector<std::size_t>& tensor_ids,
                    std::size_t k) {
  if (k == 0)
    return;
  struct Entry {
    double mag;
    std::size_t tensor;
    std::size_t flat;
  };
  std::vector<Entry> entries;
  std::size_t total = 0;
  for (std::size_t t : tensor_ids)
    total += params.tensors[t].size();
  entries.reserve(total);
  for (std::size_t t : tensor_ids) {
    const double* p = params.tensors[t].data.data();
    for (std::size_t i = 0; i < params.tensors[t].size(); ++i)
      entries.push_back({std::abs(p[i]), t, i});
  }
  auto cmp = [](const Entry& a, const Entry& b) {
    if (a.mag != b.mag)
      return a.mag < b.mag;
    if (a.tensor != b.tensor)
      return a.tensor < b.tensor;
    return a.flat < b.flat;
  };
  std::nth_element(entries.begin(), entries.begin() + (k - 1), entries.end(),
                   cmp);
  for (std::size_t i = 0; i < k; ++i)
    mask.bits[entries[i].tensor].data()[entries[i].flat] = 0.0;
}

} // namespace

PruneMask compute_mask(const ParamStore& params, double gamma,
                       MaskScope scope) {
  check_gamma(gamma);
  PruneMask m = ones_like(params);
  m.gamma = gamma;
  m.scope = scope;
  if (scope == MaskScope::Global) {
    std::vector<std::size_t> all(params.tensors.size());
    for (std::size_t t = 0; t < all.size(); ++t)
      all[t] = t;
    const auto k =
        static_cast<std::size_t>(std::floor(gamma * params.param_count()));
    prune_smallest(params, m, all, k);
  } else {
    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
      const auto k = static_cast<std::size_t>(
          std::floor(gamma * params.tensors[t].size()));
      prune_smallest(params, m, {t}, k);
    }
  }
  return m;
}

PruneMask full_mask(const ParamStore& params) {
  PruneMask m = ones_like(params);
  m.gamma = 0.0;
  return m;
}

PruneMask random_mask(const ParamStore& params, double gamma,
                      std::uint64_t seed, MaskScope scope) {
  check_gamma(gamma);
  PruneMask m = ones_like(params);
  m.gamma = gamma;
  m.scope = scope;
  Rng rng(derive_seed(seed, 'm'));
  auto prune_random = [&](const std::vector<std::size_t>& tensors,
                          std::size_t k) {
    // flat positions across the given tensors, partial Fisher-Yates
    std::vector<std::pair<std::size_t, std::size_t>> pos;
    for (std::size_t t : tensors)
      for (std::size_t i = 0; i < params.tensors[t].size(); ++i)
        pos.emplace_back(t, i);
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = i + rng.uniform_below(pos.size() - i);
      std::swap(pos[i], pos[j]);
      m.bits[pos[i].first].data()[pos[i].second] = 0.0;
    }
  };
  if (scope == MaskScope::Global) {
    std::vector<std::size_t> all(params.tensors.size());
    for (std::size_t t = 0; t < all.size(); ++t)
      all[t] = t;
    prune_random(all, static_cast<std::size_t>(
                          std::floor(gamma * params.param_count())));
  } else {
    for (std::size_t t = 0; t < params.tensors.size(); ++t)
      prune_random({t}, static_cast<std::size_t>(
                            std::floor(gamma * params.tensors[t].size())));
  }
  return m;
}

bool refresh_due(std::uint64_t step_in_epoch, RefreshMode mode) {
  return mode == RefreshMode::Step || step_in_epoch == 0;
}

SparsityStats sparsity_stats(const ParamStore& params, const PruneMask& mask) {
  SparsityStats st;
  for (std::size_t t = 0; t < mask.bits.size(); ++t) {
    const auto zeros =
        static_cast<std::size_t>((mask.bits[t].array() == 0.0).count());
    const auto total = static_cast<std::size_t>(mask.bits[t].size());
    st.per_tensor.push_back({params.tensors[t].name, {zeros, total}});
    st.zeros += zeros;
    st.total += total;
  }
  return st;
}

// ---- sparse export -------------------------------------------------------

namespace {

constexpr char kSparseMagic[4] = {'M', 'S', 'D', 'S'};
constexpr std::uint16_t kSparseVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is)
    throw IoError("unexpected end of file");
  return v;
}
void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string read_string(std::istream& is) {
  auto n = read_pod<std::uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is)
    throw IoError("unexpected end of file");
  return s;
}

} // namespace

void export_sparse(const ParamStore& params, const PruneMask& mask,
                   const std::filesystem::path& path,
                   std::uint64_t config_digest) {
  if (!mask.congruent_with(params))
    throw ConfigError("mask not congruent with parameter store");
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw IoError("cannot open for writing: " + path.string());
  os.write(kSparseMagic, 4);
  write_pod(os, kSparseVersion);
  write_pod(os, config_digest);
  write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(params.backbone));
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(params.dim));
  write_pod<std::uint32_t>(os,
                           static_cast<std::uint32_t>(params.entity_count));
  write_pod<std::uint32_t>(os,
                           static_cast<std::uint32_t>(params.relation_count));
  write_pod<std::uint32_t>(os,
                           static_cast<std::uint32_t>(params.tensors.size()));
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    const Tensor& ten = params.tensors[t];
    write_string(os, ten.name);
    write_pod<std::uint64_t>(os, ten.size());
    const double* w = ten.data.data();
    const double* b = mask.bits[t].data();
    std::vector<std::uint64_t> idx;
    for (std::size_t i = 0; i < ten.size(); ++i)
      if (b[i] != 0.0)
        idx.push_back(i);
    write_pod<std::uint64_t>(os, idx.size());
    for (std::uint64_t i : idx)
      write_pod(os, i);
    for (std::uint64_t i : idx)
      write_pod<float>(os, static_cast<float>(w[i]));
  }
  if (!os)
    throw IoError("write failure: " + path.string());
}

ParamStore load_sparse(const std::filesystem::path& path,
                       std::uint64_t* config_digest) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw IoError("cannot open: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kSparseMagic, 4) != 0)
    throw IoError("not a sparse model file: " + path.string());
  if (read_pod<std::uint16_t>(is) != kSparseVersion)
    throw IoError("unsupported sparse model version");
  auto digest = read_pod<std::uint64_t>(is);
  if (config_digest)
    *config_digest = digest;
  auto backbone = static_cast<Backbone>(read_pod<std::uint8_t>(is));
  auto dim = read_pod<std::uint32_t>(is);
  auto ecount = read_pod<std::uint32_t>(is);
  auto rcount = read_pod<std::uint32_t>(is);
  auto tcount = read_pod<std::uint32_t>(is);

  ParamStore s = init_params(backbone, dim, ecount, rcount, 0, 0.0);
  if (tcount != s.tensors.size())
    throw IoError("tensor count mismatch in sparse model file");
  for (std::size_t t = 0; t < s.tensors.size(); ++t) {
    std::string name = read_string(is);
    if (name != s.tensors[t].name)
      throw IoError("unexpected tensor '" + name + "' in sparse model file");
    auto count = read_pod<std::uint64_t>(is);
    if (count != s.tensors[t].size())
      throw IoError("element count mismatch for tensor " + name);
    auto nnz = read_pod<std::uint64_t>(is);
    std::vector<std::uint64_t> idx(nnz);
    for (auto& i : idx)
      i = read_pod<std::uint64_t>(is);
    double* w = s.tensors[t].data.data();
    for (std::uint64_t i : idx) {
      if (i >= count)
        throw IoError("flat index out of range in sparse model file");
      w[i] = static_cast<double>(read_pod<float>(is));
    }
  }
  return s;
}

} // namespace metasd
