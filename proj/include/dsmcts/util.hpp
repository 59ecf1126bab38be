#pragma once

#include <atomic>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dsmcts {

/** Mixes a 64-bit value through the splitmix64 finalizer. */
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/** Derives an independent per-task seed from a master seed and a task index. */
inline uint64_t derive_seed(uint64_t master, uint64_t index) {
    return mix64(master ^ mix64(index + 1));
}

/**
 * Uniform double in [0,1) from the top 53 bits of one generator draw.
 * Unlike std::uniform_real_distribution this is pinned down exactly,
 * so seeded runs reproduce across standard libraries.
 */
template <typename Rng>
double canonical(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr uint64_t kFnvPrime = 0x100000001b3ULL;

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = kFnvOffset) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t seed = kFnvOffset) {
    return fnv1a64(s.data(), s.size(), seed);
}

/** Content digest of a file, streamed in blocks. Throws if the file cannot be read. */
inline uint64_t file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file for digest: " + path);
    uint64_t h = kFnvOffset;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
    }
    return h;
}

inline std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

/**
 * Runs fn(i) for i in [0, count) on `workers` threads.
 * Work items are handed out through a shared counter, so fn must be
 * safe to call concurrently for distinct indices.
 */
template <typename Fn>
void parallel_for(size_t count, unsigned workers, Fn&& fn) {
    if (workers <= 1 || count <= 1) {
        for (size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    unsigned n = std::min<size_t>(workers, count);
    pool.reserve(n);
    for (unsigned t = 0; t < n; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

/**
 * Like parallel_for but calls fn(i, worker) where worker identifies the
 * executing thread, letting callers keep one scratch object per worker.
 */
template <typename Fn>
void parallel_for_indexed(size_t count, unsigned workers, Fn&& fn) {
    if (workers <= 1 || count <= 1) {
        for (size_t i = 0; i < count; ++i) fn(i, 0u);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    unsigned n = static_cast<unsigned>(std::min<size_t>(workers, count));
    pool.reserve(n);
    for (unsigned t = 0; t < n; ++t) {
        pool.emplace_back([&, t] {
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= count) return;
                fn(i, t);
            }
        });
    }
    for (auto& th : pool) th.join();
}

// Little-endian primitive IO used by every on-disk format in this project.

template <typename T>
void write_raw(std::ostream& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.write(buf, sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
    static_assert(std::is_trivially_copyable_v<T>);
    char buf[sizeof(T)];
    in.read(buf, sizeof(T));
    if (!in) throw std::runtime_error("unexpected end of stream");
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_raw<uint32_t>(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
    auto len = read_raw<uint32_t>(in);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw std::runtime_error("unexpected end of stream");
    return s;
}

}  // namespace dsmcts
