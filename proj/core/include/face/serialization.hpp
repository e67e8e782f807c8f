#pragma once

#include <json.hpp>

#include "face/aggregate.hpp"
#include "face/pipeline.hpp"
#include "face/summaries.hpp"

namespace face {

using Json = nlohmann::json;

// Summary field names follow the shared schema; matrices are row-major
// nested arrays. Object keys are kept sorted, so dump() is canonical.

Json ToJson(const TargetSummary& s);
Json ToJson(const SourceSummary& s);
Json ToJson(const TargetReport& r);
Json ToJson(const SourceReport& r);
Json ToJson(const Broadcast& b);
Json ToJson(const FaceRun& run);

// The readers throw ParseError on missing or mistyped fields.
TargetSummary TargetSummaryFromJson(const Json& j);
SourceSummary SourceSummaryFromJson(const Json& j);
TargetReport TargetReportFromJson(const Json& j);
SourceReport SourceReportFromJson(const Json& j);
Broadcast BroadcastFromJson(const Json& j);

Json VectorToJson(const Eigen::VectorXd& v);
Json MatrixToJson(const Eigen::MatrixXd& m);
Eigen::VectorXd VectorFromJson(const Json& j);
Eigen::MatrixXd MatrixFromJson(const Json& j);

}  // namespace face
