#ifndef UPL_UPL_HPP
#define UPL_UPL_HPP

#include <string_view>

#include "upl/core.hpp"
#include "upl/error.hpp"
#include "upl/gradients.hpp"
#include "upl/io.hpp"
#include "upl/losses.hpp"
#include "upl/retrieval.hpp"
#include "upl/synthlab.hpp"
#include "upl/verify.hpp"

namespace upl {
inline constexpr std::string_view kVersion = "0.1.0";
}

#endif  // UPL_UPL_HPP
