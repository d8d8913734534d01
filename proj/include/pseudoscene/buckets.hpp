#pragma once

#include <cstdint>
#include <string>

#include "pseudoscene/common.hpp"

namespace pseudoscene::catalog {

// Frequency buckets by training-image count: 1-10 rare, 11-100 common,
// above 100 frequent. Zero-count classes fall into rare; callers that need
// to flag them check the count themselves.
enum class Bucket { Rare, Common, Frequent };

inline std::string to_string(Bucket bucket) {
    switch (bucket) {
        case Bucket::Rare: return "rare";
        case Bucket::Common: return "common";
        case Bucket::Frequent: return "frequent";
    }
    throw InvalidArgument("unknown bucket value");
}

inline Bucket bucket_of(std::int64_t gold_image_count) {
    if (gold_image_count < 0) {
        throw InvalidArgument("image count must be non-negative");
    }
    if (gold_image_count <= 10) {
        return Bucket::Rare;
    }
    if (gold_image_count <= 100) {
        return Bucket::Common;
    }
    return Bucket::Frequent;
}

}  // namespace pseudoscene::catalog
