#pragma once

#include "lmerepro/dataset.hpp"
#include "lmerepro/inference.hpp"
#include "lmerepro/lmem.hpp"
#include "lmerepro/vca.hpp"

#include <json.hpp>

namespace lmerepro {

using Json = nlohmann::ordered_json;

/// Version tag carried by every top-level JSON document.
inline constexpr int kSchemaVersion = 1;

/// Lossless conversions: doubles are written in shortest round-trip form, so
/// from_json(to_json(x)) reproduces every field bit for bit.
Json to_json(const ColumnDef& c);
ColumnDef column_def_from_json(const Json& j);

Json to_json(const FittedModel& fm);
FittedModel fitted_model_from_json(const Json& j);

Json to_json(const GlrtResult& r);
GlrtResult glrt_from_json(const Json& j);

Json to_json(const VcaReport& r);
VcaReport vca_report_from_json(const Json& j);

Json to_json(const ScalingRecord& s);
ScalingRecord scaling_from_json(const Json& j);

Json to_json(const std::vector<GridRow>& rows);
std::vector<GridRow> grid_from_json(const Json& j);

Json to_json(const CrossingReport& r);

/// Hex rendering of a dataset fingerprint.
std::string fingerprint_hex(std::uint64_t fp);

}  // namespace lmerepro
