// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string_view>

namespace gvr::phrases
{

// Step templates shared by the scripted teacher and the policy vocabulary.
// Look templates carry an anchor; conclusions do not.

inline constexpr auto look = std::array<std::string_view, 6> {
    "First I will check this region",
    "Now I will look at this region",
    "I will check the glyph here",
    "I can confirm what is here",
    "Let me verify this spot",
    "I see a glyph here",
};

inline constexpr auto conclude = std::array<std::string_view, 2> {
    "I have enough information to answer.",
    "Having checked these regions, I can answer.",
};

} // namespace gvr::phrases
