#include "vlcl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace vlcl::checkpoint {

namespace {

constexpr char kMagic[8] = {'V', 'L', 'C', 'L', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint truncated");
    return v;
}

std::string read_bytes(std::istream& in, std::uint64_t n) {
    if (n > (std::uint64_t{1} << 34)) throw std::runtime_error("checkpoint entry too large");
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("checkpoint truncated");
    return s;
}

}  // namespace

void Archive::put_array(const std::string& name, ag::Shape shape, std::vector<double> values) {
    if (ag::numel(shape) != values.size()) throw std::invalid_argument("checkpoint array '" + name + "' shape mismatch");
    arrays_[name] = Array{std::move(shape), std::move(values)};
}

void Archive::put_tensor(const std::string& name, const ag::Tensor& t) {
    put_array(name, t.shape(), {t.values().begin(), t.values().end()});
}

void Archive::put_text(const std::string& name, std::string text) { texts_[name] = std::move(text); }

void Archive::put_params(const std::string& prefix, const ParamSet& params) {
    for (std::size_t i = 0; i < params.size(); ++i) put_tensor(prefix + "/" + params.names()[i], params[i]);
}

const Array& Archive::array(const std::string& name) const {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) throw std::runtime_error("checkpoint has no array '" + name + "'");
    return it->second;
}

const std::string& Archive::text(const std::string& name) const {
    auto it = texts_.find(name);
    if (it == texts_.end()) throw std::runtime_error("checkpoint has no text entry '" + name + "'");
    return it->second;
}

ag::Tensor Archive::tensor(const std::string& name) const {
    const Array& a = array(name);
    return ag::Tensor::constant(a.shape, a.values);
}

ParamSet Archive::params(const std::string& prefix, const ParamSet& layout) const {
    std::vector<ag::Tensor> t;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const std::string key = prefix + "/" + layout.names()[i];
        ag::Tensor v = tensor(key);
        if (v.shape() != layout[i].shape()) {
            throw std::runtime_error("checkpoint entry '" + key + "' has shape " + ag::to_string(v.shape()) +
                                     ", expected " + ag::to_string(layout[i].shape()));
        }
        t.push_back(std::move(v));
    }
    return layout.with_tensors(std::move(t));
}

void Archive::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
        out.write(kMagic, sizeof(kMagic));
        write_pod<std::uint32_t>(out, kFormatVersion);
        write_pod<std::uint64_t>(out, arrays_.size() + texts_.size());
        for (const auto& [name, a] : arrays_) {
            write_pod<std::uint8_t>(out, 0);
            write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
            for (auto d : a.shape) write_pod<std::uint64_t>(out, d);
            out.write(reinterpret_cast<const char*>(a.values.data()),
                      static_cast<std::streamsize>(a.values.size() * sizeof(double)));
        }
        for (const auto& [name, text] : texts_) {
            write_pod<std::uint8_t>(out, 1);
            write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_pod<std::uint64_t>(out, text.size());
            out.write(text.data(), static_cast<std::streamsize>(text.size()));
        }
        if (!out) throw std::runtime_error("write to '" + tmp.string() + "' failed");
    }
    std::filesystem::rename(tmp, path);
}

Archive Archive::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("'" + path.string() + "' is not a checkpoint file");
    }
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kFormatVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    Archive a;
    const auto count = read_pod<std::uint64_t>(in);
    for (std::uint64_t e = 0; e < count; ++e) {
        const auto kind = read_pod<std::uint8_t>(in);
        const std::string name = read_bytes(in, read_pod<std::uint32_t>(in));
        if (kind == 0) {
            const auto rank = read_pod<std::uint32_t>(in);
            if (rank > 8) throw std::runtime_error("checkpoint array '" + name + "' has implausible rank");
            ag::Shape shape(rank);
            for (auto& d : shape) d = read_pod<std::uint64_t>(in);
            const std::string raw = read_bytes(in, ag::numel(shape) * sizeof(double));
            std::vector<double> values(ag::numel(shape));
            std::memcpy(values.data(), raw.data(), raw.size());
            a.put_array(name, std::move(shape), std::move(values));
        } else if (kind == 1) {
            a.put_text(name, read_bytes(in, read_pod<std::uint64_t>(in)));
        } else {
            throw std::runtime_error("checkpoint entry '" + name + "' has unknown kind");
        }
    }
    return a;
}

}  // namespace vlcl::checkpoint
