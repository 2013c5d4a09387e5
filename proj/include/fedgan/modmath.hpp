#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "fedgan/bytes.hpp"

namespace fedgan {

struct ModMathError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Arbitrary-precision non-negative integer. Backed by GMP; the wrapper
/// enforces non-negativity (subtraction underflow throws instead of going
/// negative) and canonical big-endian byte serialization.
class BigUint {
public:
    BigUint() : z_(0) {}
    BigUint(std::uint64_t v);  // NOLINT: implicit by design, mirrors integer literals
    explicit BigUint(const mpz_class& z);
    static BigUint from_decimal(const std::string& s);
    static BigUint from_bytes_be(std::span<const std::uint8_t> bytes);

    Bytes to_bytes_be() const;  // minimal length; zero encodes as empty
    std::string to_decimal() const;
    std::uint64_t to_u64() const;  // throws if it does not fit
    double to_double() const { return z_.get_d(); }

    std::size_t bit_length() const;
    bool is_zero() const { return z_ == 0; }
    bool is_odd() const { return mpz_odd_p(z_.get_mpz_t()) != 0; }

    BigUint operator+(const BigUint& o) const { return BigUint(z_ + o.z_); }
    BigUint operator-(const BigUint& o) const;  // underflow -> ModMathError
    BigUint operator*(const BigUint& o) const { return BigUint(z_ * o.z_); }
    BigUint operator%(const BigUint& o) const;
    BigUint operator/(const BigUint& o) const;

    auto operator<=>(const BigUint& o) const { return cmp(z_, o.z_) <=> 0; }
    bool operator==(const BigUint& o) const { return z_ == o.z_; }

    const mpz_class& raw() const { return z_; }

private:
    mpz_class z_;
};

BigUint gcd(const BigUint& a, const BigUint& b);
BigUint lcm(const BigUint& a, const BigUint& b);
BigUint modpow(const BigUint& base, const BigUint& exp, const BigUint& modulus);
BigUint modinv(const BigUint& a, const BigUint& modulus);
BigUint next_prime(const BigUint& n);

/// Deterministic byte stream: ChaCha20 (RFC 8439) keyed by
/// SHA-256(seed-LE64 || labels). Identical seed and label path yields an
/// identical stream on every platform. Single-owner; not thread safe.
class Prng {
public:
    explicit Prng(std::uint64_t seed);

    /// Independent stream derived from this stream's key and the label.
    /// Does not consume any state from the parent.
    Prng substream(std::string_view label) const;

    void fill(std::span<std::uint8_t> out);
    std::uint8_t next_byte();
    std::uint64_t next_u64();
    double next_unit();      // uniform in [0, 1), 53-bit
    double next_gaussian();  // standard normal, Box-Muller

    /// Uniform in [0, bound) by rejection sampling. bound >= 1.
    BigUint below(const BigUint& bound);
    /// Uniform integer of exactly `nbits` bits (top bit forced to 1).
    BigUint exact_bits(unsigned nbits);

private:
    explicit Prng(const Digest& key);
    void refill();

    Digest key_{};
    std::uint32_t block_counter_ = 0;
    std::array<std::uint8_t, 64> buf_{};
    std::size_t buf_pos_ = 64;
    bool have_spare_gaussian_ = false;
    double spare_gaussian_ = 0.0;
};

/// Probable prime of exactly `bits` bits (bits >= 8). Miller-Rabin with 40
/// witness rounds, all randomness drawn from `rng`.
BigUint gen_prime(unsigned bits, Prng& rng);

bool is_probable_prime(const BigUint& n, int rounds, Prng& rng);

}  // namespace fedgan
