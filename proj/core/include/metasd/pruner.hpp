#pragma once
// Global magnitude pruning: binary masks over the parameter store, refresh
// policy, sparsity accounting and the sparse student export.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "metasd/grad.hpp"
#include "metasd/params.hpp"

namespace metasd {

enum class MaskScope { Global, PerTensor };
enum class RefreshMode { Epoch, Step };

// Bits stored as 0.0/1.0 doubles so masked views are plain cwise products.
struct PruneMask {
  std::vector<MatrixRM> bits;
  double gamma = 0.0;
  MaskScope scope = MaskScope::Global;
  std::uint64_t refreshed_at = 0;

  std::size_t zero_count() const;
  std::size_t total_count() const;

  bool congruent_with(const ParamStore& params) const;
  friend bool operator==(const PruneMask& a, const PruneMask& b) {
    if (a.bits.size() != b.bits.size())
      return false;
    for (std::size_t t = 0; t < a.bits.size(); ++t)
      if (a.bits[t] != b.bits[t])
        return false;
    return true;
  }
};

// Marks the floor(gamma*P) smallest-|w| entries zero; ties broken by
// ascending flat index.  Per-tensor scope applies the fraction within each
// tensor independently.
PruneMask compute_mask(const ParamStore& params, double gamma,
                       MaskScope scope = MaskScope::Global);

// All-ones mask (gamma recorded as 0).
PruneMask full_mask(const ParamStore& params);

// Random mask at the same zero cardinality as compute_mask would produce;
// used by the no-magnitude-pruning ablation.
PruneMask random_mask(const ParamStore& params, double gamma,
                      std::uint64_t seed, MaskScope scope = MaskScope::Global);

// True when the mask must be recomputed: at step 0 of every epoch in Epoch
// mode, every step in Step mode.
bool refresh_due(std::uint64_t step_in_epoch, RefreshMode mode);

struct SparsityStats {
  std::size_t total = 0;
  std::size_t zeros = 0;
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>>
      per_tensor; // name -> (zeros, total)

  double sparsity() const {
    return total == 0 ? 0.0 : static_cast<double>(zeros) / total;
  }
  std::size_t effective_params() const { return total - zeros; }
};

SparsityStats sparsity_stats(const ParamStore& params, const PruneMask& mask);

// Sparse student export ("MSDS"): little-endian; magic, version u16,
// config digest u64, backbone tag u8, dim/entity/relation counts u32,
// tensor count u32, then per tensor: name, element count, nnz, ascending
// u64 flat indices, f32 values.
void export_sparse(const ParamStore& params, const PruneMask& mask,
                   const std::filesystem::path& path,
                   std::uint64_t config_digest = 0);

// Reload; pruned entries are zero, surviving values carry f32 precision.
ParamStore load_sparse(const std::filesystem::path& path,
                       std::uint64_t* config_digest = nullptr);

} // namespace metasd
