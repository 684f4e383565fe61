#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace evgame {

/// SHA-256 of a byte buffer, lowercase hex.
std::string sha256_hex(const void* data, std::size_t len);

// Builds the canonical byte preimage for content digests. All integers and
// IEEE-754 doubles are written little-endian so the digest is independent of
// the textual serialization.
class DigestBuffer {
public:
    void put_u32(std::uint32_t v);
    void put_u64(std::uint64_t v);
    void put_f64(double v);
    void put_str(const std::string& s);
    void put_f64_vec(const std::vector<double>& v);

    std::string hex() const;

private:
    std::vector<unsigned char> bytes_;
};

}  // namespace evgame
