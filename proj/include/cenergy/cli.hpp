#pragma once

#include <ostream>
#include <span>
#include <string>
#include <string_view>

namespace cenergy::cli {

inline constexpr std::string_view kRendererUrl = "https://cdn.plot.ly/plotly-2.29.1.min.js";
inline constexpr std::string_view kApiKeyEnv = "CENERGY_OPENTOPO_KEY";

/// Exit codes: 0 success, 1 runtime failure, 2 usage error.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

/// Standalone page that renders `figure_json` with the pinned renderer.
std::string html_page(std::string_view figure_json, std::string_view title);

}  // namespace cenergy::cli
