#pragma once

#include <string>

#include "prc/pipeline.hpp"

namespace prc {

// JSON image of a fitted pipeline. Numbers are written with round-trip
// precision, so a reloaded bundle reproduces predictions bit-identically.
// Unknown keys are ignored on load, which lets callers attach audit sections.
std::string bundle_to_json(const PipelineFit& fit);
PipelineFit bundle_from_json(const std::string& text);

void save_bundle(const PipelineFit& fit, const std::string& path);
PipelineFit load_bundle(const std::string& path);

} // namespace prc
