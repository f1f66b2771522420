#pragma once

#include "morseflow/algebra.hpp"
#include "morseflow/ainfty.hpp"
#include "morseflow/collapse.hpp"
#include "morseflow/cover.hpp"
#include "morseflow/linalg.hpp"
#include "morseflow/morse.hpp"
#include "morseflow/solver.hpp"
#include "morseflow/svg.hpp"
#include "morseflow/trees.hpp"
#include "morseflow/version.hpp"
