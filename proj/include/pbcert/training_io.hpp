#pragma once

#include <optional>
#include <string>

#include "pbcert/json_format.hpp"
#include "pbcert/training.hpp"

namespace pbcert {

/// CSV with a header row; feature columns first, integer label last.
/// The class count is num_classes when given, else max label + 1 (at least 2).
LabelledDataset parse_csv_dataset(const std::string& text, std::optional<int> num_classes = std::nullopt);
LabelledDataset load_csv_dataset(const std::string& path, std::optional<int> num_classes = std::nullopt);

/// Partition config:
///
///   {"num_classes": 3, "fully_refined": true, "losses": [...]}
///   {"num_classes": 3,
///    "cells": [{"type": 0, "cells": "diagonal"},
///              {"type": 1, "cells": "off-diagonal"},
///              {"type": 2, "cells": [[0, 1], [1, 0]]}],
///    "losses": [0, 1, 2]}
///
/// Cell rules apply in order, later ones overriding earlier ones; pairs are
/// [predicted, true]. Every cell must end up assigned.
ErrorPartition parse_partition(const Json& config);
ErrorPartition load_partition(const std::string& path);

/// Recognised keys mirror TrainConfig; unknown keys are rejected.
TrainConfig parse_train_config(const Json& config);
TrainConfig load_train_config(const std::string& path);

Json epoch_record_to_json(const EpochRecord& record);
/// One compact JSON object per line.
std::string history_to_jsonl(const std::vector<EpochRecord>& history);

Json posterior_to_json(const GaussianPosterior& q);
Json prior_to_json(const PriorSpec& p);

/// Posterior, prior, both certificates and the split sizes.
Json train_result_to_json(const TrainResult& result);

std::string read_text_file(const std::string& path);

}  // namespace pbcert
