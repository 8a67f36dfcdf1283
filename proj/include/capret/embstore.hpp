#pragma once

#include "capret/linalg.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace capret {

namespace fs = std::filesystem;

/// Fixed-dimension float32 vectors stored contiguously, row-major.
///
/// Rows are kept exactly as produced (no normalization). The invariants are
/// dim > 0 and every component finite; `load_table` additionally rejects
/// zero-norm rows since cosine similarity is undefined for them.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    explicit EmbeddingTable(std::uint32_t dim);
    EmbeddingTable(std::uint32_t dim, std::vector<float> data);

    std::uint32_t dim() const noexcept { return dim_; }
    std::size_t row_count() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }

    std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
    Vec row_f64(std::size_t i) const;
    const std::vector<float>& data() const noexcept { return data_; }

    /// Appends a row, rounding to float32. Returns the new row index.
    std::size_t append(VecView v);
    std::size_t append(std::span<const float> v);

    bool operator==(const EmbeddingTable&) const = default;

private:
    std::uint32_t dim_ = 0;
    std::vector<float> data_;
};

/// Reads an EMB1 file. Throws FormatError (bad magic/version/size) or
/// DataError (non-finite or zero-norm row, with its index).
EmbeddingTable load_table(const fs::path& path);

/// Writes an EMB1 file. Throws IoError.
void write_table(const EmbeddingTable& table, const fs::path& path);

/// EMB1 bytes for a table (used by write_table and by byte-level tests).
std::vector<std::uint8_t> encode_table(const EmbeddingTable& table);
EmbeddingTable decode_table(std::span<const std::uint8_t> bytes, const std::string& origin = "<memory>");

struct VideoEntry {
    std::string video_id;
    std::vector<std::uint32_t> frame_rows;
    std::string dataset_tag;
    // "train", "test" or "all" (usable for both).
    std::string split = "all";
};

struct CaptionRecord {
    std::string caption_id;
    std::string video_id;
    std::string captioner;
    int frame_index = 0;
    std::size_t embedding_row = 0;
    double clipscore = 0.0;
    std::optional<std::string> text_hash;
};

struct QueryRecord {
    std::string query_id;
    std::string video_id;
    std::size_t embedding_row = 0;
};

struct DatasetManifest {
    std::string name;
    std::string prng;  // generator id when synthesized, empty otherwise
    std::optional<int> captioned_frames;  // M, when known

    // Paths relative to the manifest's directory.
    std::string frame_table = "frames.emb";
    std::string caption_table = "captions.emb";
    std::string query_table = "queries.emb";
    std::optional<std::string> caption_text_table;
    std::string frame_sidecar = "frames.jsonl";
    std::string caption_sidecar = "captions.jsonl";
    std::string query_sidecar = "queries.jsonl";

    std::vector<VideoEntry> videos;
    std::vector<CaptionRecord> captions;
    std::vector<QueryRecord> queries;
    std::map<std::string, std::vector<std::size_t>> gt_caption_groups;
};

/// A manifest together with its loaded tables.
struct Dataset {
    DatasetManifest manifest;
    EmbeddingTable frames;
    EmbeddingTable captions;
    EmbeddingTable queries;
    std::optional<EmbeddingTable> caption_text;

    const std::string& name() const { return manifest.name; }
    std::uint32_t dim() const { return frames.dim(); }

    /// Frame embeddings of one video as a double matrix.
    Matrix video_frames(std::size_t video_index) const;
    /// Indices into manifest.captions, grouped per video id.
    std::map<std::string, std::vector<std::size_t>> captions_by_video() const;
    std::vector<std::string> captioner_labels() const;
    /// Videos usable for the given split ("train" or "test"); "all" matches both.
    std::vector<std::size_t> videos_in_split(const std::string& split) const;
};

/// Checks every manifest invariant against the loaded tables. Throws DataError.
void validate(const Dataset& ds);

Dataset load_dataset(const fs::path& manifest_path);

/// Writes tables, JSONL sidecars and manifest.json into `dir`.
/// Returns the manifest path.
fs::path write_dataset(const Dataset& ds, const fs::path& dir);

struct SynthSpec {
    std::string name = "synthetic";
    int videos = 200;
    int dim = 32;
    int frames = 5;                   // N frame embeddings per video
    int captions_per_captioner = 10;  // M captioned frames per video
    std::vector<std::string> captioners = {"C", "B"};
    double frame_noise = 0.3;    // sigma_f
    double caption_noise = 0.3;  // sigma_c, also used for queries
    double junk_fraction = 0.5;  // p_junk
    int queries_per_video = 1;
    double test_fraction = 0.5;
    // Jitter covariance: a share of the energy lives in a rank-r subspace per
    // modality (r = 0 gives isotropic jitter). Total expected energy is
    // sigma^2 * dim either way.
    int nuisance_rank = 4;
    double nuisance_share = 1.0;
    // Seeds the embedding geometry (nuisance subspaces). Datasets sharing a
    // domain seed behave as if embedded by the same backbone.
    std::uint64_t domain_seed = 0;

    void check() const;  // throws SpecError
};

/// Builds a synthetic dataset in memory. Deterministic in (seed, spec).
Dataset synthesize(std::uint64_t seed, const SynthSpec& spec);

/// Synthesizes and writes to disk; returns the manifest path.
fs::path synthesize_to(std::uint64_t seed, const SynthSpec& spec, const fs::path& dir);

}  // namespace capret
