#pragma once

#include <filesystem>
#include <functional>
#include <string>

// Builds a tiny plan under `dir`, runs it end to end, renders the report and
// checks invariants on the results. Returns the number of failed checks.
int run_selftest(const std::filesystem::path& dir, std::uint64_t seed,
                 const std::function<void(const std::string&)>& log);
