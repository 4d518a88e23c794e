#pragma once

namespace kexfam {

inline constexpr const char* kVersion = "0.1.0";

// Format tag written into every serialized model document.
inline constexpr const char* kModelFormatTag = "kexfam-model-v1";

}  // namespace kexfam
