#pragma once

#include "capret/embstore.hpp"
#include "capret/linalg.hpp"

#include <cstdint>
#include <string>

namespace capret {

enum class Modality { Visual, Text };

/// Per-modality affine heads on top of frozen backbone embeddings.
/// Identity-initialized, so an untrained model reproduces the frozen baseline.
struct ProjectionModel {
    Matrix w_visual;
    Vec b_visual;
    Matrix w_text;
    Vec b_text;

    static ProjectionModel identity(std::size_t dim);

    std::size_t dim() const noexcept { return b_visual.size(); }
    std::size_t parameter_count() const noexcept { return 2 * (dim() * dim() + dim()); }
    bool all_finite() const;

    bool operator==(const ProjectionModel&) const = default;
};

/// w * raw + b for the given modality.
Vec forward_embed(const ProjectionModel& model, VecView raw, Modality modality);

/// Projects every row of `rows`.
Matrix forward_embed_rows(const ProjectionModel& model, const Matrix& rows, Modality modality);

struct CheckpointInfo {
    std::uint64_t config_hash = 0;
    std::uint64_t step = 0;
};

/// Checkpoint container: magic "CKP1", u32 LE version, u32 LE header length,
/// JSON header {dim, config_hash, step, tensors}, then the four tensors as
/// little-endian float64 in header order.
void save_checkpoint(const ProjectionModel& model, const CheckpointInfo& info, const fs::path& path);
ProjectionModel load_checkpoint(const fs::path& path, CheckpointInfo* info = nullptr);

}  // namespace capret
