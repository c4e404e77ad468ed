#pragma once

#include "r2s/crypto.hpp"

#include <cstdint>
#include <string_view>

namespace r2s {

// Canonical binary framing: every field is a 4-byte big-endian length
// followed by the raw bytes, in a fixed order.
class CanonicalWriter {
public:
    CanonicalWriter& field(ByteView bytes);
    CanonicalWriter& field(std::string_view text) { return field(as_bytes(text)); }
    CanonicalWriter& field_u64(std::uint64_t value);

    const Bytes& bytes() const& { return out_; }
    Bytes bytes() && { return std::move(out_); }

private:
    Bytes out_;
};

class CanonicalReader {
public:
    explicit CanonicalReader(ByteView in) : in_(in) {}

    ByteView field();
    std::string text_field();
    std::uint64_t u64_field();
    bool done() const { return pos_ == in_.size(); }
    /// Throws unless every byte has been consumed.
    void expect_done() const;

private:
    ByteView in_;
    std::size_t pos_ = 0;
};

}  // namespace r2s
