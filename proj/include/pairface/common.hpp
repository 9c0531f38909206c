#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pairface {

// ---------------------------------------------------------------------------
// Error types
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& what) : Error("shape mismatch: " + what) {}
};
struct UnknownPoseCode : Error {
    explicit UnknownPoseCode(const std::string& code) : Error("unknown pose code: '" + code + "'") {}
};
struct UndecodableImage : Error {
    explicit UndecodableImage(const std::string& path) : Error("undecodable image: " + path) {}
};
struct EmptyCorpus : Error {
    explicit EmptyCorpus(const std::string& what) : Error("empty corpus: " + what) {}
};
struct SharingDisabled : Error {
    SharingDisabled() : Error("weight sharing is disabled for this generator pair") {}
};
struct MissingInput : Error {
    explicit MissingInput(const std::string& what) : Error("missing input: " + what) {}
};
struct NonFiniteLoss : Error {
    explicit NonFiniteLoss(const std::string& what) : Error("non-finite loss: " + what) {}
};
struct SingularCovariance : Error {
    explicit SingularCovariance(const std::string& what) : Error("singular covariance: " + what) {}
};
struct ProviderFailure : Error {
    explicit ProviderFailure(const std::string& what) : Error("similarity provider failure: " + what) {}
};
struct CheckpointError : Error {
    explicit CheckpointError(const std::string& what) : Error("checkpoint: " + what) {}
};

// ---------------------------------------------------------------------------
// Seeded RNG service
//
// Every source of randomness in the project (parameter init, dropout, the
// train/test split, epoch shuffling) draws from a stream derived from one
// master seed, so a run is a pure function of its seed.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

class RngService {
public:
    explicit RngService(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    // Independent deterministic stream for a named purpose.
    std::mt19937_64 stream(std::string_view tag) const {
        return std::mt19937_64(splitmix64(seed_ ^ fnv1a(tag)));
    }

private:
    std::uint64_t seed_;
};

// mt19937_64 state round-trips through text; used for resumable training.
inline std::string save_engine(const std::mt19937_64& eng) {
    std::ostringstream os;
    os << eng;
    return os.str();
}

inline void load_engine(std::mt19937_64& eng, const std::string& text) {
    std::istringstream is(text);
    is >> eng;
    if (is.fail()) throw Error("corrupt RNG state");
}

}  // namespace pairface
