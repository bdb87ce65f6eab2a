#pragma once

// Checkpoint container: a flat map of named float64 arrays plus named text
// entries, stored in one binary file.
//
// Layout (little-endian):
//   magic "VLCLCKPT" (8 bytes), u32 version, u64 entry count, then per entry
//   u8 kind (0 = array, 1 = text), u32 name length, name bytes,
//   array: u32 rank, u64 dims[rank], f64 values[prod(dims)]
//   text:  u64 length, bytes

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vlcl/params.hpp"
#include "vlcl/tensor.hpp"

namespace vlcl::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

struct Array {
    ag::Shape shape;
    std::vector<double> values;
};

class Archive {
public:
    void put_array(const std::string& name, ag::Shape shape, std::vector<double> values);
    void put_tensor(const std::string& name, const ag::Tensor& t);
    void put_text(const std::string& name, std::string text);
    /// Stores every parameter as "<prefix>/<name>".
    void put_params(const std::string& prefix, const ParamSet& params);

    bool has_array(const std::string& name) const { return arrays_.count(name) != 0; }
    bool has_text(const std::string& name) const { return texts_.count(name) != 0; }
    const Array& array(const std::string& name) const;
    const std::string& text(const std::string& name) const;
    ag::Tensor tensor(const std::string& name) const;
    /// Parameters named like `layout`, read from "<prefix>/<name>", as constants.
    ParamSet params(const std::string& prefix, const ParamSet& layout) const;

    const std::map<std::string, Array>& arrays() const { return arrays_; }
    const std::map<std::string, std::string>& texts() const { return texts_; }

    void save(const std::filesystem::path& path) const;
    static Archive load(const std::filesystem::path& path);

private:
    std::map<std::string, Array> arrays_;
    std::map<std::string, std::string> texts_;
};

}  // namespace vlcl::checkpoint
