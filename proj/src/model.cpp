#include "capret/model.hpp"

#include "capret/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <fstream>

namespace capret {

using nlohmann::json;

ProjectionModel ProjectionModel::identity(std::size_t dim) {
    if (dim == 0) throw ShapeError("model dimension must be positive");
    return {Matrix::identity(dim), Vec(dim, 0.0), Matrix::identity(dim), Vec(dim, 0.0)};
}

bool ProjectionModel::all_finite() const {
    auto finite = [](const std::vector<double>& v) {
        for (double x : v) {
            if (!std::isfinite(x)) return false;
        }
        return true;
    };
    return finite(w_visual.data()) && finite(b_visual) && finite(w_text.data()) && finite(b_text);
}

Vec forward_embed(const ProjectionModel& model, VecView raw, Modality modality) {
    const Matrix& w = modality == Modality::Visual ? model.w_visual : model.w_text;
    const Vec& b = modality == Modality::Visual ? model.b_visual : model.b_text;
    if (raw.size() != model.dim()) {
        throw ShapeError("input dim " + std::to_string(raw.size()) + " != model dim " + std::to_string(model.dim()));
    }
    Vec out(model.dim());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double s = 0.0;
        auto wr = w.row(i);
        for (std::size_t k = 0; k < raw.size(); ++k) s += wr[k] * raw[k];
        out[i] = s + b[i];
    }
    return out;
}

Matrix forward_embed_rows(const ProjectionModel& model, const Matrix& rows, Modality modality) {
    Matrix out(rows.rows(), model.dim());
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        const Vec p = forward_embed(model, rows.row(r), modality);
        std::copy(p.begin(), p.end(), out.row(r).begin());
    }
    return out;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

void put_f64(std::string& out, double d) {
    const auto v = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

std::uint64_t get_le(const std::string& b, std::size_t off, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[off + i])) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const ProjectionModel& model, const CheckpointInfo& info, const fs::path& path) {
    const auto d = model.dim();
    json header{{"dim", d},
                {"config_hash", info.config_hash},
                {"step", info.step},
                {"tensors",
                 {{{"name", "w_visual"}, {"shape", {d, d}}},
                  {{"name", "b_visual"}, {"shape", {d}}},
                  {{"name", "w_text"}, {"shape", {d, d}}},
                  {{"name", "b_text"}, {"shape", {d}}}}}};
    const std::string h = header.dump();
    std::string out = "CKP1";
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(h.size()));
    out += h;
    for (double x : model.w_visual.data()) put_f64(out, x);
    for (double x : model.b_visual) put_f64(out, x);
    for (double x : model.w_text.data()) put_f64(out, x);
    for (double x : model.b_text) put_f64(out, x);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed for " + path.string());
}

ProjectionModel load_checkpoint(const fs::path& path, CheckpointInfo* info) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path.string());
    const std::string b{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    if (b.size() < 12 || b.compare(0, 4, "CKP1") != 0) throw FormatError(path.string() + ": not a CKP1 checkpoint");
    if (get_le(b, 4, 4) != 1) throw FormatError(path.string() + ": unsupported checkpoint version");
    const auto hlen = static_cast<std::size_t>(get_le(b, 8, 4));
    if (b.size() < 12 + hlen) throw FormatError(path.string() + ": truncated header");
    json header;
    try {
        header = json::parse(b.substr(12, hlen));
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    const auto d = header.at("dim").get<std::size_t>();
    if (d == 0) throw FormatError(path.string() + ": dim must be positive");
    const std::size_t expected = 12 + hlen + 8 * 2 * (d * d + d);
    if (b.size() != expected) {
        throw FormatError(path.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(b.size()));
    }
    ProjectionModel m{Matrix(d, d), Vec(d), Matrix(d, d), Vec(d)};
    std::size_t off = 12 + hlen;
    auto read = [&](std::vector<double>& dst) {
        for (double& x : dst) {
            x = std::bit_cast<double>(get_le(b, off, 8));
            off += 8;
        }
    };
    read(m.w_visual.data());
    read(m.b_visual);
    read(m.w_text.data());
    read(m.b_text);
    if (!m.all_finite()) throw DataError(path.string() + ": checkpoint holds non-finite parameters");
    if (info) {
        info->config_hash = header.value("config_hash", std::uint64_t{0});
        info->step = header.value("step", std::uint64_t{0});
    }
    return m;
}

}  // namespace capret
