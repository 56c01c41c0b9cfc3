#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ulrn/plan/plan.hpp"

namespace ulrn::report {

struct ReportResult {
  std::vector<std::filesystem::path> files;  // written, in order
  std::vector<std::string> omissions;        // models left out of a figure
};

// Renders one SVG per analysis and summary.md from the artifacts the plan's
// analyses wrote. A model whose checkpoint and artifacts are both absent is
// dropped from its figure and flagged; any other missing artifact is an error
// (kIo) that lists every missing file.
ReportResult render_report(const plan::ExperimentPlan& plan, const std::filesystem::path& out_dir);

}  // namespace ulrn::report
