#include "fedgan/modmath.hpp"

#include <cmath>
#include <cstring>

namespace fedgan {

BigUint::BigUint(std::uint64_t v) {
    mpz_import(z_.get_mpz_t(), 1, 1, sizeof(v), 0, 0, &v);
}

BigUint::BigUint(const mpz_class& z) : z_(z) {
    if (z_ < 0) throw ModMathError("BigUint cannot be negative");
}

BigUint BigUint::from_decimal(const std::string& s) {
    mpz_class z;
    if (mpz_set_str(z.get_mpz_t(), s.c_str(), 10) != 0 || z < 0)
        throw ModMathError("invalid decimal string: " + s);
    return BigUint(z);
}

BigUint BigUint::from_bytes_be(std::span<const std::uint8_t> bytes) {
    mpz_class z;
    if (!bytes.empty())
        mpz_import(z.get_mpz_t(), bytes.size(), 1, 1, 0, 0, bytes.data());
    return BigUint(z);
}

Bytes BigUint::to_bytes_be() const {
    if (z_ == 0) return {};
    std::size_t count = 0;
    Bytes out((mpz_sizeinbase(z_.get_mpz_t(), 2) + 7) / 8);
    mpz_export(out.data(), &count, 1, 1, 0, 0, z_.get_mpz_t());
    out.resize(count);
    return out;
}

std::string BigUint::to_decimal() const { return z_.get_str(10); }

std::uint64_t BigUint::to_u64() const {
    if (mpz_sizeinbase(z_.get_mpz_t(), 2) > 64)
        throw ModMathError("value does not fit in 64 bits");
    std::uint64_t v = 0;
    Bytes b = to_bytes_be();
    for (std::uint8_t byte : b) v = (v << 8) | byte;
    return v;
}

std::size_t BigUint::bit_length() const {
    return z_ == 0 ? 0 : mpz_sizeinbase(z_.get_mpz_t(), 2);
}

BigUint BigUint::operator-(const BigUint& o) const {
    if (z_ < o.z_) throw ModMathError("BigUint subtraction underflow");
    return BigUint(mpz_class(z_ - o.z_));
}

BigUint BigUint::operator%(const BigUint& o) const {
    if (o.z_ == 0) throw ModMathError("modulo by zero");
    return BigUint(mpz_class(z_ % o.z_));
}

BigUint BigUint::operator/(const BigUint& o) const {
    if (o.z_ == 0) throw ModMathError("division by zero");
    return BigUint(mpz_class(z_ / o.z_));
}

BigUint gcd(const BigUint& a, const BigUint& b) {
    mpz_class g;
    mpz_gcd(g.get_mpz_t(), a.raw().get_mpz_t(), b.raw().get_mpz_t());
    return BigUint(g);
}

BigUint lcm(const BigUint& a, const BigUint& b) {
    mpz_class l;
    mpz_lcm(l.get_mpz_t(), a.raw().get_mpz_t(), b.raw().get_mpz_t());
    return BigUint(l);
}

BigUint modpow(const BigUint& base, const BigUint& exp, const BigUint& modulus) {
    if (modulus < BigUint(2)) throw ModMathError("modpow: modulus must be >= 2");
    mpz_class r;
    mpz_powm(r.get_mpz_t(), base.raw().get_mpz_t(), exp.raw().get_mpz_t(),
             modulus.raw().get_mpz_t());
    return BigUint(r);
}

BigUint modinv(const BigUint& a, const BigUint& modulus) {
    if (modulus < BigUint(2)) throw ModMathError("modinv: modulus must be >= 2");
    mpz_class r;
    if (mpz_invert(r.get_mpz_t(), a.raw().get_mpz_t(),
                   modulus.raw().get_mpz_t()) == 0) {
        throw ModMathError("modinv: no inverse, gcd = " +
                           gcd(a, modulus).to_decimal());
    }
    return BigUint(r);
}

BigUint next_prime(const BigUint& n) {
    mpz_class r;
    mpz_nextprime(r.get_mpz_t(), n.raw().get_mpz_t());
    return BigUint(r);
}

// ---------------------------------------------------------------------------
// ChaCha20 block function, RFC 8439. Nonce fixed to zero; the 32-bit block
// counter gives a 256 GiB stream per key, far beyond any use here.

namespace {

inline std::uint32_t rotl32(std::uint32_t x, int n) {
    return (x << n) | (x >> (32 - n));
}

inline void quarter_round(std::uint32_t& a, std::uint32_t& b, std::uint32_t& c,
                          std::uint32_t& d) {
    a += b; d ^= a; d = rotl32(d, 16);
    c += d; b ^= c; b = rotl32(b, 12);
    a += b; d ^= a; d = rotl32(d, 8);
    c += d; b ^= c; b = rotl32(b, 7);
}

void chacha20_block(const std::uint8_t key[32], std::uint32_t counter,
                    std::uint8_t out[64]) {
    std::uint32_t state[16];
    state[0] = 0x61707865; state[1] = 0x3320646e;
    state[2] = 0x79622d32; state[3] = 0x6b206574;
    for (int i = 0; i < 8; ++i) {
        state[4 + i] = static_cast<std::uint32_t>(key[4 * i]) |
                       (static_cast<std::uint32_t>(key[4 * i + 1]) << 8) |
                       (static_cast<std::uint32_t>(key[4 * i + 2]) << 16) |
                       (static_cast<std::uint32_t>(key[4 * i + 3]) << 24);
    }
    state[12] = counter;
    state[13] = state[14] = state[15] = 0;

    std::uint32_t x[16];
    std::memcpy(x, state, sizeof(x));
    for (int round = 0; round < 10; ++round) {
        quarter_round(x[0], x[4], x[8], x[12]);
        quarter_round(x[1], x[5], x[9], x[13]);
        quarter_round(x[2], x[6], x[10], x[14]);
        quarter_round(x[3], x[7], x[11], x[15]);
        quarter_round(x[0], x[5], x[10], x[15]);
        quarter_round(x[1], x[6], x[11], x[12]);
        quarter_round(x[2], x[7], x[8], x[13]);
        quarter_round(x[3], x[4], x[9], x[14]);
    }
    for (int i = 0; i < 16; ++i) {
        std::uint32_t v = x[i] + state[i];
        out[4 * i] = static_cast<std::uint8_t>(v);
        out[4 * i + 1] = static_cast<std::uint8_t>(v >> 8);
        out[4 * i + 2] = static_cast<std::uint8_t>(v >> 16);
        out[4 * i + 3] = static_cast<std::uint8_t>(v >> 24);
    }
}

}  // namespace

Prng::Prng(std::uint64_t seed) {
    Bytes material;
    for (int i = 0; i < 8; ++i)
        material.push_back(static_cast<std::uint8_t>(seed >> (8 * i)));
    key_ = sha256(material);
}

Prng::Prng(const Digest& key) : key_(key) {}

Prng Prng::substream(std::string_view label) const {
    Bytes material(key_.begin(), key_.end());
    material.push_back(0x01);
    append_field(material, label);
    return Prng(sha256(material));
}

void Prng::refill() {
    chacha20_block(key_.data(), block_counter_++, buf_.data());
    buf_pos_ = 0;
}

void Prng::fill(std::span<std::uint8_t> out) {
    for (std::uint8_t& b : out) {
        if (buf_pos_ == 64) refill();
        b = buf_[buf_pos_++];
    }
}

std::uint8_t Prng::next_byte() {
    if (buf_pos_ == 64) refill();
    return buf_[buf_pos_++];
}

std::uint64_t Prng::next_u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | next_byte();
    return v;
}

double Prng::next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Prng::next_gaussian() {
    if (have_spare_gaussian_) {
        have_spare_gaussian_ = false;
        return spare_gaussian_;
    }
    double u1 = next_unit();
    double u2 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_gaussian_ = r * std::sin(theta);
    have_spare_gaussian_ = true;
    return r * std::cos(theta);
}

BigUint Prng::below(const BigUint& bound) {
    if (bound.is_zero()) throw ModMathError("Prng::below: bound must be >= 1");
    std::size_t bits = bound.bit_length();
    std::size_t nbytes = (bits + 7) / 8;
    int excess = static_cast<int>(nbytes * 8 - bits);
    Bytes buf(nbytes);
    while (true) {
        fill(buf);
        if (!buf.empty()) buf[0] &= static_cast<std::uint8_t>(0xff >> excess);
        BigUint candidate = BigUint::from_bytes_be(buf);
        if (candidate < bound) return candidate;
    }
}

BigUint Prng::exact_bits(unsigned nbits) {
    if (nbits == 0) throw ModMathError("exact_bits: nbits must be >= 1");
    std::size_t nbytes = (nbits + 7) / 8;
    int excess = static_cast<int>(nbytes * 8 - nbits);
    Bytes buf(nbytes);
    fill(buf);
    buf[0] &= static_cast<std::uint8_t>(0xff >> excess);
    buf[0] |= static_cast<std::uint8_t>(0x80 >> excess);
    return BigUint::from_bytes_be(buf);
}

bool is_probable_prime(const BigUint& n, int rounds, Prng& rng) {
    if (n < BigUint(2)) return false;
    for (std::uint64_t small : {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37}) {
        BigUint sp(small);
        if (n == sp) return true;
        if ((n % sp).is_zero()) return false;
    }
    // n - 1 = d * 2^s with d odd
    BigUint n_minus_1 = n - BigUint(1);
    BigUint d = n_minus_1;
    unsigned s = 0;
    while (!d.is_odd()) {
        d = d / BigUint(2);
        ++s;
    }
    BigUint range = n - BigUint(3);  // witnesses in [2, n-2]
    for (int round = 0; round < rounds; ++round) {
        BigUint a = rng.below(range) + BigUint(2);
        BigUint x = modpow(a, d, n);
        if (x == BigUint(1) || x == n_minus_1) continue;
        bool composite = true;
        for (unsigned i = 1; i < s; ++i) {
            x = (x * x) % n;
            if (x == n_minus_1) {
                composite = false;
                break;
            }
        }
        if (composite) return false;
    }
    return true;
}

BigUint gen_prime(unsigned bits, Prng& rng) {
    if (bits < 8) throw ModMathError("gen_prime: bits must be >= 8");
    while (true) {
        BigUint candidate = rng.exact_bits(bits);
        if (!candidate.is_odd()) candidate = candidate + BigUint(1);
        if (candidate.bit_length() != bits) continue;  // +1 may overflow width
        if (is_probable_prime(candidate, 40, rng)) return candidate;
    }
}

}  // namespace fedgan
