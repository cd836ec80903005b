#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "seesaw/model.hpp"

namespace seesaw {

namespace {

constexpr std::string_view kMagic = "SEESAWCK";
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename U>
    U le() {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return v;
    }

    std::string_view take(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated file");
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string checkpoint_bytes(const SeesawModel& model) {
    std::string out(kMagic);
    put_le<std::uint32_t>(out, kVersion);
    const std::string cfg = model.config().serialize();
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
    out += cfg;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.parameters().size()));
    for (const auto& [name, t] : model.parameters()) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
        for (double v : t.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

SeesawModel model_from_checkpoint_bytes(std::string_view bytes) {
    Reader r(bytes);
    if (r.take(kMagic.size()) != kMagic) throw CheckpointError("checkpoint: bad magic, not a seesaw checkpoint");
    const auto version = r.le<std::uint32_t>();
    if (version != kVersion)
        throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version));
    ModelConfig cfg;
    try {
        cfg = ModelConfig::parse(r.take(r.le<std::uint32_t>()));
    } catch (const UsageError& e) {
        throw CheckpointError(std::string("checkpoint: bad config block: ") + e.what());
    }
    SeesawModel model(cfg);
    const auto count = r.le<std::uint32_t>();
    if (count != model.parameters().size())
        throw CheckpointError("checkpoint: expected " + std::to_string(model.parameters().size()) +
                              " parameters, file has " + std::to_string(count));
    for (const auto& [name, handle] : model.parameters()) {
        const auto stored = r.take(r.le<std::uint32_t>());
        if (stored != name)
            throw CheckpointError("checkpoint: expected parameter '" + name + "', found '" + std::string(stored) + "'");
        Shape shape(r.le<std::uint32_t>());
        for (auto& d : shape) d = r.le<std::uint64_t>();
        if (shape != handle.shape())
            throw CheckpointError("checkpoint: parameter '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                                  shape_str(handle.shape()));
        Tensor t = handle;
        for (double& v : t.mutable_data()) v = std::bit_cast<double>(r.le<std::uint64_t>());
    }
    if (!r.done()) throw CheckpointError("checkpoint: trailing bytes after last parameter");
    return model;
}

void save_checkpoint(const std::filesystem::path& path, const SeesawModel& model) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("checkpoint: cannot open '" + path.string() + "' for writing");
    const std::string bytes = checkpoint_bytes(model);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw CheckpointError("checkpoint: write to '" + path.string() + "' failed");
}

SeesawModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("checkpoint: cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return model_from_checkpoint_bytes(ss.str());
}

}  // namespace seesaw
