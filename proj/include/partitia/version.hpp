#pragma once

// Version string embedded in run manifests so artifacts identify the code
// revision that produced them.

namespace partitia {

inline constexpr const char* kVersion = "partitia 1.0.0";

}  // namespace partitia
