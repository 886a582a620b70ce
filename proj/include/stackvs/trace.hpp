#pragma once

#include <filesystem>
#include <string>

#include "stackvs/stack_decoder.hpp"

namespace stackvs {

/// CSV with header `stage,t,branch,index,weight,ratio`: one row per attention
/// weight, grouped by (stage, t) with the visual branch `v` before the
/// semantic branch `s`. Stages count from 1 and steps from 0; `ratio` is the
/// visual share of the projected inputs to the language LSTM. Values are
/// printed with 17 significant digits.
std::string trace_csv(const AttentionTrace& trace);

void export_trace(const AttentionTrace& trace, const std::filesystem::path& path);

}  // namespace stackvs
