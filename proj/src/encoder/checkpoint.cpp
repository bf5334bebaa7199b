#include "cass/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "cass/errors.hpp"

namespace cass {
namespace {

constexpr std::string_view kMagic = "CASSCKPT";
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
  public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    std::uint64_t uint(int width) {
        need(static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += static_cast<std::size_t>(width);
        return v;
    }

    std::string text(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

  private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
    }
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    std::string out(kMagic);
    put_u32(out, kVersion);
    const std::string manifest = ckpt.manifest.dump();
    put_u64(out, manifest.size());
    out += manifest;
    put_u64(out, ckpt.arrays.size());
    for (const auto& [name, tensor] : ckpt.arrays) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put_u32(out, static_cast<std::uint32_t>(tensor.dim()));
        for (std::size_t d : tensor.shape()) put_u64(out, d);
        for (double v : tensor.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    if (r.text(kMagic.size()) != kMagic) throw CheckpointError("not a checkpoint file (bad magic)");
    const auto version = r.uint(4);
    if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    try {
        ckpt.manifest = nlohmann::json::parse(r.text(r.uint(8)));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint manifest: ") + e.what());
    }
    const std::uint64_t count = r.uint(8);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name = r.text(r.uint(4));
        const std::uint64_t rank = r.uint(4);
        Shape shape;
        for (std::uint64_t d = 0; d < rank; ++d) shape.push_back(r.uint(8));
        std::vector<double> values(shape_numel(shape));
        for (double& v : values) v = std::bit_cast<double>(r.uint(8));
        ckpt.arrays.emplace(std::move(name), Tensor::from(std::move(shape), std::move(values)));
    }
    if (!r.done()) throw CheckpointError("trailing bytes after checkpoint arrays");
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const std::string bytes = serialize_checkpoint(ckpt);
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw CheckpointError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str());
}

void store_params(Checkpoint& ckpt, const ParamList& params, const std::string& prefix) {
    for (const NamedParam& p : params) ckpt.arrays.insert_or_assign(prefix + p.name, p.tensor.detach());
}

void restore_params(const Checkpoint& ckpt, ParamList& params, const std::string& prefix) {
    for (NamedParam& p : params) {
        auto it = ckpt.arrays.find(prefix + p.name);
        if (it == ckpt.arrays.end()) throw CheckpointError("checkpoint lacks array " + prefix + p.name);
        if (it->second.shape() != p.tensor.shape()) {
            throw CheckpointError("array " + prefix + p.name + " has shape " + shape_to_string(it->second.shape()) +
                                  ", model expects " + shape_to_string(p.tensor.shape()));
        }
        auto dst = p.tensor.mutable_data();
        std::copy(it->second.data().begin(), it->second.data().end(), dst.begin());
    }
}

}  // namespace cass
