#pragma once

#include <type_traits>
#include <utility>

#include "xalign/numerics/tape.hpp"
#include "xalign/numerics/vec.hpp"

namespace xalign::num {

// Element type of a vector-like (Vec64 -> double, VarVec -> Var).
template <class V>
using scalar_of_t = std::remove_cvref_t<decltype(std::declval<const V&>()[0])>;

}  // namespace xalign::num
