#pragma once

// SFT1 tensor container.
//
//   "SFT1" | u32 entry count | entries...
//   entry: u16 name length | name bytes | u8 dtype (0 f64, 1 i64) | u8 rank | u64 dims[rank] | payload
//
// Payload is row-major; every multi-byte value is little-endian.

#include "sfvae/numerics.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace sfvae::sft1 {

enum class DType : std::uint8_t { f64 = 0, i64 = 1 };

class FormatError : public Error {
public:
    using Error::Error;
};

struct Tensor {
    std::vector<std::uint64_t> dims;
    std::variant<std::vector<double>, std::vector<std::int64_t>> data;

    DType dtype() const { return data.index() == 0 ? DType::f64 : DType::i64; }
    std::uint64_t element_count() const
    {
        std::uint64_t n = 1;
        for (auto d : dims) {
            if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d) throw FormatError("tensor dims overflow");
            n *= d;
        }
        return n;
    }
    bool operator==(const Tensor&) const = default;
};

/// Ordered by insertion; names are unique.
class Container {
public:
    void put(const std::string& name, Tensor t)
    {
        if (name.empty() || name.size() > 0xFFFF) throw FormatError("entry name must be 1..65535 bytes");
        const std::uint64_t n = t.element_count();
        const std::size_t have = std::visit([](const auto& v) { return v.size(); }, t.data);
        if (n != have) throw FormatError("entry '" + name + "': payload size does not match dims");
        if (t.dims.size() > 0xFF) throw FormatError("entry '" + name + "': rank above 255");
        if (index_.contains(name)) throw FormatError("duplicate entry name '" + name + "'");
        index_[name] = entries_.size();
        entries_.emplace_back(name, std::move(t));
    }

    void put_scalar(const std::string& name, double v) { put(name, {{}, std::vector<double>{v}}); }
    void put_scalar(const std::string& name, std::int64_t v) { put(name, {{}, std::vector<std::int64_t>{v}}); }
    void put_vector(const std::string& name, const Vec& v)
    {
        put(name, {{static_cast<std::uint64_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size())});
    }
    /// Stored row-major, as [rows x cols].
    void put_matrix(const std::string& name, const Mat& m)
    {
        std::vector<double> flat(static_cast<std::size_t>(m.size()));
        std::size_t k = 0;
        for (Index r = 0; r < m.rows(); ++r) {
            for (Index c = 0; c < m.cols(); ++c) flat[k++] = m(r, c);
        }
        put(name, {{static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, std::move(flat)});
    }

    bool contains(const std::string& name) const { return index_.contains(name); }
    std::size_t size() const { return entries_.size(); }
    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

    const Tensor& at(const std::string& name) const
    {
        const auto it = index_.find(name);
        if (it == index_.end()) throw FormatError("missing entry '" + name + "'");
        return entries_[it->second].second;
    }

    const std::vector<double>& f64(const std::string& name) const
    {
        const auto& t = at(name);
        if (t.dtype() != DType::f64) throw FormatError("entry '" + name + "' is not f64");
        return std::get<0>(t.data);
    }
    const std::vector<std::int64_t>& i64(const std::string& name) const
    {
        const auto& t = at(name);
        if (t.dtype() != DType::i64) throw FormatError("entry '" + name + "' is not i64");
        return std::get<1>(t.data);
    }

    double scalar_f64(const std::string& name) const
    {
        const auto& v = f64(name);
        if (v.size() != 1 || !at(name).dims.empty()) throw FormatError("entry '" + name + "' is not a scalar");
        return v[0];
    }
    std::int64_t scalar_i64(const std::string& name) const
    {
        const auto& v = i64(name);
        if (v.size() != 1 || !at(name).dims.empty()) throw FormatError("entry '" + name + "' is not a scalar");
        return v[0];
    }
    Vec vector(const std::string& name) const
    {
        const auto& t = at(name);
        if (t.dims.size() != 1) throw FormatError("entry '" + name + "' is not rank 1");
        const auto& v = f64(name);
        return Eigen::Map<const Vec>(v.data(), static_cast<Index>(v.size()));
    }
    Mat matrix(const std::string& name) const
    {
        const auto& t = at(name);
        if (t.dims.size() != 2) throw FormatError("entry '" + name + "' is not rank 2");
        const auto& v = f64(name);
        const auto rows = static_cast<Index>(t.dims[0]);
        const auto cols = static_cast<Index>(t.dims[1]);
        return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), rows,
                                                                                                        cols);
    }

    bool operator==(const Container& o) const { return entries_ == o.entries_; }

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::map<std::string, std::size_t> index_;
};

namespace detail {

template <class T>
void put_le(std::string& out, T value)
{
    static_assert(std::is_trivially_copyable_v<T>);
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                    std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
    const auto u = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <class T>
    T get(const std::string& context)
    {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                     std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                        std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
        need(sizeof(T), context);
        U u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            u |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return std::bit_cast<T>(u);
    }

    std::string_view take(std::size_t n, const std::string& context)
    {
        need(n, context);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const std::string& context) const
    {
        if (remaining() < n) throw FormatError("truncated SFT1 data while reading " + context);
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize(const Container& c)
{
    std::string out = "SFT1";
    detail::put_le(out, static_cast<std::uint32_t>(c.size()));
    for (const auto& [name, t] : c.entries()) {
        detail::put_le(out, static_cast<std::uint16_t>(name.size()));
        out += name;
        detail::put_le(out, static_cast<std::uint8_t>(t.dtype()));
        detail::put_le(out, static_cast<std::uint8_t>(t.dims.size()));
        for (auto d : t.dims) detail::put_le(out, d);
        std::visit([&](const auto& v) {
            for (auto x : v) detail::put_le(out, x);
        }, t.data);
    }
    return out;
}

inline Container deserialize(std::string_view bytes)
{
    detail::Reader r(bytes);
    if (r.take(std::min<std::size_t>(4, r.remaining()), "magic") != "SFT1") throw FormatError("bad SFT1 magic");
    const auto count = r.get<std::uint32_t>("entry count");
    Container c;
    for (std::uint32_t e = 0; e < count; ++e) {
        const std::string where = "entry " + std::to_string(e);
        const auto len = r.get<std::uint16_t>(where + " name length");
        const std::string name(r.take(len, where + " name"));
        const std::string ctx = "entry '" + name + "'";
        const auto dtype = r.get<std::uint8_t>(ctx + " dtype");
        if (dtype > 1) throw FormatError(ctx + ": unknown dtype code " + std::to_string(dtype));
        const auto rank = r.get<std::uint8_t>(ctx + " rank");
        Tensor t;
        std::uint64_t n = 1;
        for (std::uint8_t k = 0; k < rank; ++k) {
            const auto d = r.get<std::uint64_t>(ctx + " dims");
            if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d) throw FormatError(ctx + ": dims overflow");
            n *= d;
            t.dims.push_back(d);
        }
        if (n > r.remaining() / 8) throw FormatError("truncated SFT1 data while reading " + ctx + " payload");
        if (dtype == 0) {
            std::vector<double> v(n);
            for (auto& x : v) x = r.get<double>(ctx + " payload");
            t.data = std::move(v);
        } else {
            std::vector<std::int64_t> v(n);
            for (auto& x : v) x = r.get<std::int64_t>(ctx + " payload");
            t.data = std::move(v);
        }
        c.put(name, std::move(t));
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after last SFT1 entry");
    return c;
}

inline void write_file(const std::filesystem::path& path, const Container& c)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    const std::string bytes = serialize(c);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + path.string());
}

inline Container read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return deserialize(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace sfvae::sft1
