#pragma once

#define MORSEFLOW_VERSION "0.1.0"

namespace morseflow {
inline const char* version() { return MORSEFLOW_VERSION; }
}  // namespace morseflow
