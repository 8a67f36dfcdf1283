#include "capret/embstore.hpp"

#include "capret/captionsel.hpp"
#include "capret/errors.hpp"
#include "capret/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace capret {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 16;
constexpr const char* kManifestFormat = "capret-manifest/1";

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
    return v;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<json> read_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<json> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            rows.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// EmbeddingTable

EmbeddingTable::EmbeddingTable(std::uint32_t dim) : dim_(dim) {
    if (dim == 0) throw ShapeError("embedding dimension must be positive");
}

EmbeddingTable::EmbeddingTable(std::uint32_t dim, std::vector<float> data) : dim_(dim), data_(std::move(data)) {
    if (dim == 0) throw ShapeError("embedding dimension must be positive");
    if (data_.size() % dim != 0) throw ShapeError("payload is not a whole number of rows");
}

Vec EmbeddingTable::row_f64(std::size_t i) const {
    auto r = row(i);
    return Vec(r.begin(), r.end());
}

std::size_t EmbeddingTable::append(VecView v) {
    if (v.size() != dim_) throw ShapeError("row length " + std::to_string(v.size()) + " != dim " + std::to_string(dim_));
    for (double x : v) data_.push_back(static_cast<float>(x));
    return row_count() - 1;
}

std::size_t EmbeddingTable::append(std::span<const float> v) {
    if (v.size() != dim_) throw ShapeError("row length " + std::to_string(v.size()) + " != dim " + std::to_string(dim_));
    data_.insert(data_.end(), v.begin(), v.end());
    return row_count() - 1;
}

std::vector<std::uint8_t> encode_table(const EmbeddingTable& table) {
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderBytes + table.data().size() * 4);
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(table.row_count()));
    put_u32(out, table.dim());
    for (float f : table.data()) put_u32(out, std::bit_cast<std::uint32_t>(f));
    return out;
}

EmbeddingTable decode_table(std::span<const std::uint8_t> bytes, const std::string& origin) {
    if (bytes.size() < kHeaderBytes) {
        throw FormatError(origin + ": file too short for EMB1 header (" + std::to_string(bytes.size()) + " bytes)");
    }
    if (!std::equal(kMagic, kMagic + 4, bytes.begin())) throw FormatError(origin + ": bad magic, expected EMB1");
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kVersion) throw FormatError(origin + ": unsupported EMB1 version " + std::to_string(version));
    const std::uint32_t count = get_u32(bytes, 8);
    const std::uint32_t dim = get_u32(bytes, 12);
    if (dim == 0) throw FormatError(origin + ": dim must be positive");
    const std::uint64_t expected = static_cast<std::uint64_t>(count) * dim * 4;
    const std::uint64_t actual = bytes.size() - kHeaderBytes;
    if (expected != actual) {
        throw FormatError(origin + ": payload size mismatch, expected " + std::to_string(expected) +
                          " bytes, found " + std::to_string(actual));
    }
    std::vector<float> data(static_cast<std::size_t>(count) * dim);
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = std::bit_cast<float>(get_u32(bytes, kHeaderBytes + 4 * i));
    }
    for (std::size_t r = 0; r < count; ++r) {
        double sq = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
            const float v = data[r * dim + c];
            if (!std::isfinite(v)) throw DataError(origin + ": non-finite value in row " + std::to_string(r));
            sq += static_cast<double>(v) * v;
        }
        if (sq == 0.0) throw DataError(origin + ": zero-norm vector in row " + std::to_string(r));
    }
    return EmbeddingTable(dim, std::move(data));
}

EmbeddingTable load_table(const fs::path& path) {
    const auto bytes = read_file(path);
    return decode_table(bytes, path.string());
}

void write_table(const EmbeddingTable& table, const fs::path& path) {
    const auto bytes = encode_table(table);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Dataset helpers

Matrix Dataset::video_frames(std::size_t video_index) const {
    const auto& v = manifest.videos.at(video_index);
    Matrix m(v.frame_rows.size(), frames.dim());
    for (std::size_t n = 0; n < v.frame_rows.size(); ++n) {
        auto r = frames.row(v.frame_rows[n]);
        std::copy(r.begin(), r.end(), m.row(n).begin());
    }
    return m;
}

std::map<std::string, std::vector<std::size_t>> Dataset::captions_by_video() const {
    std::map<std::string, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < manifest.captions.size(); ++i) out[manifest.captions[i].video_id].push_back(i);
    return out;
}

std::vector<std::string> Dataset::captioner_labels() const {
    std::set<std::string> s;
    for (const auto& c : manifest.captions) s.insert(c.captioner);
    return {s.begin(), s.end()};
}

std::vector<std::size_t> Dataset::videos_in_split(const std::string& split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < manifest.videos.size(); ++i) {
        const auto& s = manifest.videos[i].split;
        if (s == split || s == "all" || split == "all") out.push_back(i);
    }
    return out;
}

void validate(const Dataset& ds) {
    const auto& m = ds.manifest;
    const std::string where = "manifest '" + m.name + "': ";
    if (ds.frames.dim() == 0) throw DataError(where + "frame table is empty or missing");
    if (ds.captions.dim() != 0 && ds.captions.dim() != ds.frames.dim()) {
        throw DataError(where + "caption dim " + std::to_string(ds.captions.dim()) + " != frame dim " +
                        std::to_string(ds.frames.dim()));
    }
    if (ds.queries.dim() != 0 && ds.queries.dim() != ds.frames.dim()) {
        throw DataError(where + "query dim " + std::to_string(ds.queries.dim()) + " != frame dim " +
                        std::to_string(ds.frames.dim()));
    }

    std::set<std::string> video_ids;
    for (const auto& v : m.videos) {
        if (!video_ids.insert(v.video_id).second) throw DataError(where + "duplicate video id " + v.video_id);
        if (v.frame_rows.empty()) throw DataError(where + "video " + v.video_id + " has no frames");
        for (std::size_t n = 0; n < v.frame_rows.size(); ++n) {
            if (v.frame_rows[n] >= ds.frames.row_count()) {
                throw DataError(where + "video " + v.video_id + " references frame row " +
                                std::to_string(v.frame_rows[n]) + " beyond table size " +
                                std::to_string(ds.frames.row_count()));
            }
            if (n > 0 && v.frame_rows[n] <= v.frame_rows[n - 1]) {
                throw DataError(where + "video " + v.video_id + " frame rows are not strictly increasing");
            }
        }
        if (v.split != "train" && v.split != "test" && v.split != "all") {
            throw DataError(where + "video " + v.video_id + " has unknown split '" + v.split + "'");
        }
    }

    std::set<std::string> caption_ids;
    std::set<std::tuple<std::string, std::string, int>> frame_slots;
    for (const auto& c : m.captions) {
        if (!caption_ids.insert(c.caption_id).second) throw DataError(where + "duplicate caption id " + c.caption_id);
        if (!video_ids.count(c.video_id)) {
            throw DataError(where + "caption " + c.caption_id + " references unknown video " + c.video_id);
        }
        if (c.embedding_row >= ds.captions.row_count()) {
            throw DataError(where + "caption " + c.caption_id + " references row " + std::to_string(c.embedding_row) +
                            " beyond table size " + std::to_string(ds.captions.row_count()));
        }
        if (!(c.clipscore >= 0.0) || !std::isfinite(c.clipscore)) {
            throw DataError(where + "caption " + c.caption_id + " has invalid clipscore");
        }
        if (c.frame_index < 0 || (m.captioned_frames && c.frame_index >= *m.captioned_frames)) {
            throw DataError(where + "caption " + c.caption_id + " frame index " + std::to_string(c.frame_index) +
                            " out of range");
        }
        if (!frame_slots.emplace(c.video_id, c.captioner, c.frame_index).second) {
            throw DataError(where + "captioner " + c.captioner + " has two captions for frame " +
                            std::to_string(c.frame_index) + " of video " + c.video_id);
        }
    }
    if (ds.caption_text && ds.caption_text->row_count() != ds.captions.row_count()) {
        throw DataError(where + "caption text table has " + std::to_string(ds.caption_text->row_count()) +
                        " rows, caption table has " + std::to_string(ds.captions.row_count()));
    }

    std::set<std::string> query_ids;
    for (const auto& q : m.queries) {
        if (!query_ids.insert(q.query_id).second) throw DataError(where + "duplicate query id " + q.query_id);
        if (!video_ids.count(q.video_id)) {
            throw DataError(where + "query " + q.query_id + " ground truth video " + q.video_id + " does not exist");
        }
        if (q.embedding_row >= ds.queries.row_count()) {
            throw DataError(where + "query " + q.query_id + " references row " + std::to_string(q.embedding_row) +
                            " beyond table size " + std::to_string(ds.queries.row_count()));
        }
    }
    for (const auto& [vid, rows] : m.gt_caption_groups) {
        if (!video_ids.count(vid)) throw DataError(where + "ground-truth group for unknown video " + vid);
        for (auto r : rows) {
            if (r >= ds.queries.row_count()) {
                throw DataError(where + "ground-truth group of " + vid + " references query row " + std::to_string(r) +
                                " beyond table size");
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Manifest I/O

Dataset load_dataset(const fs::path& manifest_path) {
    json j;
    {
        std::ifstream in(manifest_path);
        if (!in) throw IoError("cannot open manifest " + manifest_path.string());
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw FormatError(manifest_path.string() + ": " + e.what());
        }
    }
    const fs::path base = manifest_path.parent_path();
    Dataset ds;
    auto& m = ds.manifest;
    try {
        if (j.value("format", std::string()) != kManifestFormat) {
            throw FormatError(manifest_path.string() + ": expected format " + kManifestFormat);
        }
        m.name = j.at("name").get<std::string>();
        m.prng = j.value("prng", std::string());
        if (j.contains("captioned_frames")) m.captioned_frames = j.at("captioned_frames").get<int>();
        m.frame_table = j.at("frame_table").get<std::string>();
        m.caption_table = j.at("caption_table").get<std::string>();
        m.query_table = j.at("query_table").get<std::string>();
        if (j.contains("caption_text_table")) m.caption_text_table = j.at("caption_text_table").get<std::string>();
        m.frame_sidecar = j.at("frame_sidecar").get<std::string>();
        m.caption_sidecar = j.at("caption_sidecar").get<std::string>();
        m.query_sidecar = j.at("query_sidecar").get<std::string>();
        for (const auto& v : j.at("videos")) {
            VideoEntry e;
            e.video_id = v.at("video_id").get<std::string>();
            e.frame_rows = v.at("frame_rows").get<std::vector<std::uint32_t>>();
            e.dataset_tag = v.value("dataset_tag", m.name);
            e.split = v.value("split", std::string("all"));
            m.videos.push_back(std::move(e));
        }
        if (j.contains("gt_caption_groups")) {
            for (const auto& [vid, rows] : j.at("gt_caption_groups").items()) {
                m.gt_caption_groups[vid] = rows.get<std::vector<std::size_t>>();
            }
        }
    } catch (const json::exception& e) {
        throw FormatError(manifest_path.string() + ": " + e.what());
    }

    ds.frames = load_table(base / m.frame_table);
    ds.captions = load_table(base / m.caption_table);
    ds.queries = load_table(base / m.query_table);
    if (m.caption_text_table) {
        ds.caption_text = (*m.caption_text_table == m.caption_table) ? ds.captions
                                                                      : load_table(base / *m.caption_text_table);
    }

    try {
        const auto frame_rows = read_jsonl(base / m.frame_sidecar);
        if (frame_rows.size() != ds.frames.row_count()) {
            throw DataError(m.frame_sidecar + " has " + std::to_string(frame_rows.size()) + " lines, table has " +
                            std::to_string(ds.frames.row_count()) + " rows");
        }
        const auto cap_rows = read_jsonl(base / m.caption_sidecar);
        if (cap_rows.size() != ds.captions.row_count()) {
            throw DataError(m.caption_sidecar + " has " + std::to_string(cap_rows.size()) + " lines, table has " +
                            std::to_string(ds.captions.row_count()) + " rows");
        }
        for (std::size_t i = 0; i < cap_rows.size(); ++i) {
            const auto& r = cap_rows[i];
            CaptionRecord c;
            c.caption_id = r.at("caption_id").get<std::string>();
            c.video_id = r.at("video_id").get<std::string>();
            c.captioner = r.at("captioner").get<std::string>();
            c.frame_index = r.at("frame_index").get<int>();
            c.clipscore = r.at("clipscore").get<double>();
            c.embedding_row = i;
            if (r.contains("text_hash") && !r.at("text_hash").is_null()) c.text_hash = r.at("text_hash").get<std::string>();
            m.captions.push_back(std::move(c));
        }
        const auto q_rows = read_jsonl(base / m.query_sidecar);
        if (q_rows.size() != ds.queries.row_count()) {
            throw DataError(m.query_sidecar + " has " + std::to_string(q_rows.size()) + " lines, table has " +
                            std::to_string(ds.queries.row_count()) + " rows");
        }
        for (std::size_t i = 0; i < q_rows.size(); ++i) {
            m.queries.push_back({q_rows[i].at("query_id").get<std::string>(),
                                 q_rows[i].at("video_id").get<std::string>(), i});
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("sidecar: ") + e.what());
    }

    validate(ds);
    return ds;
}

fs::path write_dataset(const Dataset& ds, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    const auto& m = ds.manifest;

    write_table(ds.frames, dir / m.frame_table);
    write_table(ds.captions, dir / m.caption_table);
    write_table(ds.queries, dir / m.query_table);
    if (ds.caption_text && m.caption_text_table && *m.caption_text_table != m.caption_table) {
        write_table(*ds.caption_text, dir / *m.caption_text_table);
    }

    // frame sidecar: position of each row within its video
    std::vector<json> frame_meta(ds.frames.row_count());
    for (const auto& v : m.videos) {
        for (std::size_t n = 0; n < v.frame_rows.size(); ++n) {
            frame_meta.at(v.frame_rows[n]) = json{{"video_id", v.video_id}, {"frame_index", n}};
        }
    }
    std::string text;
    for (const auto& f : frame_meta) text += f.dump() + "\n";
    write_text(dir / m.frame_sidecar, text);

    std::vector<const CaptionRecord*> by_row(ds.captions.row_count(), nullptr);
    for (const auto& c : m.captions) by_row.at(c.embedding_row) = &c;
    text.clear();
    for (const auto* c : by_row) {
        if (!c) throw DataError("caption table row without a caption record");
        json r{{"caption_id", c->caption_id}, {"video_id", c->video_id}, {"captioner", c->captioner},
               {"frame_index", c->frame_index}, {"clipscore", c->clipscore}};
        r["text_hash"] = c->text_hash ? json(*c->text_hash) : json(nullptr);
        text += r.dump() + "\n";
    }
    write_text(dir / m.caption_sidecar, text);

    std::vector<const QueryRecord*> q_by_row(ds.queries.row_count(), nullptr);
    for (const auto& q : m.queries) q_by_row.at(q.embedding_row) = &q;
    text.clear();
    for (const auto* q : q_by_row) {
        if (!q) throw DataError("query table row without a query record");
        text += json{{"query_id", q->query_id}, {"video_id", q->video_id}}.dump() + "\n";
    }
    write_text(dir / m.query_sidecar, text);

    json j;
    j["format"] = kManifestFormat;
    j["name"] = m.name;
    if (!m.prng.empty()) j["prng"] = m.prng;
    if (m.captioned_frames) j["captioned_frames"] = *m.captioned_frames;
    j["frame_table"] = m.frame_table;
    j["caption_table"] = m.caption_table;
    j["query_table"] = m.query_table;
    if (m.caption_text_table) j["caption_text_table"] = *m.caption_text_table;
    j["frame_sidecar"] = m.frame_sidecar;
    j["caption_sidecar"] = m.caption_sidecar;
    j["query_sidecar"] = m.query_sidecar;
    j["videos"] = json::array();
    for (const auto& v : m.videos) {
        j["videos"].push_back(
            {{"video_id", v.video_id}, {"frame_rows", v.frame_rows}, {"dataset_tag", v.dataset_tag}, {"split", v.split}});
    }
    if (!m.gt_caption_groups.empty()) {
        json g = json::object();
        for (const auto& [vid, rows] : m.gt_caption_groups) g[vid] = rows;
        j["gt_caption_groups"] = g;
    }
    const fs::path path = dir / "manifest.json";
    write_text(path, j.dump(2) + "\n");
    return path;
}

// ---------------------------------------------------------------------------
// Synthesis

void SynthSpec::check() const {
    if (videos <= 0) throw SpecError("videos must be positive (got " + std::to_string(videos) + ")");
    if (dim <= 0) throw SpecError("dim must be positive (got " + std::to_string(dim) + ")");
    if (frames <= 0) throw SpecError("frames per video must be positive");
    if (captions_per_captioner <= 0) throw SpecError("captions per captioner must be positive");
    if (captioners.empty()) throw SpecError("at least one captioner label is required");
    if (std::set<std::string>(captioners.begin(), captioners.end()).size() != captioners.size()) {
        throw SpecError("captioner labels must be distinct");
    }
    if (!(junk_fraction >= 0.0 && junk_fraction <= 1.0)) throw SpecError("junk fraction must lie in [0, 1]");
    if (!(frame_noise >= 0.0) || !(caption_noise >= 0.0)) throw SpecError("noise levels must be non-negative");
    if (queries_per_video < 0) throw SpecError("queries per video must be non-negative");
    if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) throw SpecError("test fraction must lie in [0, 1]");
    if (nuisance_rank < 0 || nuisance_rank > dim) throw SpecError("nuisance rank must lie in [0, dim]");
    if (!(nuisance_share >= 0.0 && nuisance_share <= 1.0)) throw SpecError("nuisance share must lie in [0, 1]");
}

namespace {

Vec normalized(Vec v) {
    const double n = norm(v);
    for (double& x : v) x /= n;
    return v;
}

Vec gaussian(Rng& rng, int dim) {
    Vec v(dim);
    for (double& x : v) x = rng.normal();
    return v;
}

// Orthonormal basis (rows) of a random rank-r subspace, via Gram-Schmidt.
std::vector<Vec> random_subspace(Rng& rng, int dim, int rank) {
    std::vector<Vec> basis;
    while (static_cast<int>(basis.size()) < rank) {
        Vec v = gaussian(rng, dim);
        for (const auto& b : basis) {
            const double p = dot(v, b);
            for (int i = 0; i < dim; ++i) v[i] -= p * b[i];
        }
        const double n = norm(v);
        if (n < 1e-8) continue;
        for (double& x : v) x /= n;
        basis.push_back(std::move(v));
    }
    return basis;
}

// Jitter with E|n|^2 = dim: an isotropic part plus a part confined to the
// nuisance subspace.
class Jitter {
public:
    Jitter(std::vector<Vec> basis, int dim, double share)
        : basis_(std::move(basis)), dim_(dim),
          iso_scale_(std::sqrt(1.0 - (basis_.empty() ? 0.0 : share))),
          sub_scale_(basis_.empty() ? 0.0 : std::sqrt(share * dim / static_cast<double>(basis_.size()))) {}

    Vec draw(Rng& rng) const {
        Vec v = gaussian(rng, dim_);
        for (double& x : v) x *= iso_scale_;
        for (const auto& b : basis_) {
            const double g = rng.normal() * sub_scale_;
            for (int i = 0; i < dim_; ++i) v[i] += g * b[i];
        }
        return v;
    }

private:
    std::vector<Vec> basis_;
    int dim_;
    double iso_scale_;
    double sub_scale_;
};

Vec jittered(const Vec& center, double sigma, const Jitter& jitter, Rng& rng) {
    if (sigma == 0.0) return center;
    Vec n = jitter.draw(rng);
    Vec v(center.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = center[i] + sigma * n[i];
    return normalized(std::move(v));
}

Vec as_stored(const Vec& v) {
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
    return out;
}

std::string video_id_for(int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "v%05d", i);
    return buf;
}

}  // namespace

Dataset synthesize(std::uint64_t seed, const SynthSpec& spec) {
    spec.check();
    const int d = spec.dim;

    Rng domain_rng(derive_seed(spec.domain_seed, "synth/domain"));
    const Jitter visual_jitter(random_subspace(domain_rng, d, spec.nuisance_rank), d, spec.nuisance_share);
    const Jitter text_jitter(random_subspace(domain_rng, d, spec.nuisance_rank), d, spec.nuisance_share);

    Rng concept_rng(derive_seed(seed, "synth/concepts"));
    Rng frame_rng(derive_seed(seed, "synth/frames"));
    Rng caption_rng(derive_seed(seed, "synth/captions"));
    Rng query_rng(derive_seed(seed, "synth/queries"));

    Dataset ds;
    auto& m = ds.manifest;
    m.name = spec.name;
    m.prng = std::string(Rng::kAlgorithm);
    m.captioned_frames = spec.captions_per_captioner;
    m.caption_text_table = m.caption_table;
    ds.frames = EmbeddingTable(static_cast<std::uint32_t>(d));
    ds.captions = EmbeddingTable(static_cast<std::uint32_t>(d));
    ds.queries = EmbeddingTable(static_cast<std::uint32_t>(d));

    const int n_test = static_cast<int>(std::floor(spec.videos * spec.test_fraction + 1e-9));

    for (int vi = 0; vi < spec.videos; ++vi) {
        const Vec concept_vec = normalized(gaussian(concept_rng, d));
        VideoEntry video;
        video.video_id = video_id_for(vi);
        video.dataset_tag = spec.name;
        video.split = vi < n_test ? "test" : "train";
        for (int n = 0; n < spec.frames; ++n) {
            video.frame_rows.push_back(
                static_cast<std::uint32_t>(ds.frames.append(jittered(concept_vec, spec.frame_noise, visual_jitter, frame_rng))));
        }

        for (const auto& label : spec.captioners) {
            for (int f = 0; f < spec.captions_per_captioner; ++f) {
                const bool junk = caption_rng.uniform() < spec.junk_fraction;
                const Vec center = junk ? normalized(gaussian(caption_rng, d)) : concept_vec;
                const Vec caption = jittered(center, spec.caption_noise, text_jitter, caption_rng);
                // The frame this caption was generated from.
                const Vec source = jittered(concept_vec, spec.frame_noise, visual_jitter, caption_rng);

                CaptionRecord rec;
                rec.video_id = video.video_id;
                rec.captioner = label;
                rec.frame_index = f;
                rec.caption_id = video.video_id + ":" + label + ":" + std::to_string(f);
                rec.embedding_row = ds.captions.append(caption);
                rec.clipscore = compute_clipscore(as_stored(source), ds.captions.row_f64(rec.embedding_row));
                rec.text_hash = hex64(derive_seed(seed, m.name + "/" + rec.caption_id));
                m.captions.push_back(std::move(rec));
            }
        }

        std::vector<std::size_t> group;
        for (int q = 0; q < spec.queries_per_video; ++q) {
            QueryRecord rec;
            rec.query_id = video.video_id + ":q" + std::to_string(q);
            rec.video_id = video.video_id;
            rec.embedding_row = ds.queries.append(jittered(concept_vec, spec.caption_noise, text_jitter, query_rng));
            group.push_back(rec.embedding_row);
            m.queries.push_back(std::move(rec));
        }
        if (!group.empty()) m.gt_caption_groups[video.video_id] = std::move(group);
        m.videos.push_back(std::move(video));
    }
    ds.caption_text = ds.captions;
    validate(ds);
    return ds;
}

fs::path synthesize_to(std::uint64_t seed, const SynthSpec& spec, const fs::path& dir) {
    return write_dataset(synthesize(seed, spec), dir);
}

}  // namespace capret
