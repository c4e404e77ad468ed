#include "r2s/encoding.hpp"

namespace r2s {

CanonicalWriter& CanonicalWriter::field(ByteView bytes)
{
    if (bytes.size() > 0xFFFFFFFFu) throw Error("field too large for canonical encoding");
    const auto n = static_cast<std::uint32_t>(bytes.size());
    out_.push_back(static_cast<std::uint8_t>(n >> 24));
    out_.push_back(static_cast<std::uint8_t>(n >> 16));
    out_.push_back(static_cast<std::uint8_t>(n >> 8));
    out_.push_back(static_cast<std::uint8_t>(n));
    out_.insert(out_.end(), bytes.begin(), bytes.end());
    return *this;
}

CanonicalWriter& CanonicalWriter::field_u64(std::uint64_t value)
{
    std::array<std::uint8_t, 8> be{};
    for (int i = 7; i >= 0; --i) {
        be[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(value);
        value >>= 8;
    }
    return field(be);
}

ByteView CanonicalReader::field()
{
    if (in_.size() - pos_ < 4) throw Error("truncated canonical length prefix");
    std::uint32_t n = 0;
    for (int i = 0; i < 4; ++i) n = (n << 8) | in_[pos_++];
    if (in_.size() - pos_ < n) throw Error("truncated canonical field");
    auto out = in_.subspan(pos_, n);
    pos_ += n;
    return out;
}

std::string CanonicalReader::text_field()
{
    auto f = field();
    return {f.begin(), f.end()};
}

std::uint64_t CanonicalReader::u64_field()
{
    auto f = field();
    if (f.size() != 8) throw Error("integer field must be 8 bytes");
    std::uint64_t v = 0;
    for (auto b : f) v = (v << 8) | b;
    return v;
}

void CanonicalReader::expect_done() const
{
    if (!done()) throw Error("trailing bytes after canonical encoding");
}

}  // namespace r2s
