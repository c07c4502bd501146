#pragma once

#include "almanac/common/rng.hpp"
#include "almanac/ehrqa/item.hpp"
#include "almanac/store/store.hpp"

#include <functional>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace almanac::ehrqa {

/// Field name -> value, one per history resource of a source.
using Row = std::map<std::string, std::string>;

/// Distinct rows per source (see slot_sources()), in first-seen order.
std::map<std::string, std::vector<Row>> history_rows(const store::PatientHistory& history);

struct Grounded {
    std::string question;
    GoldAnnotation gold;
    Bindings slots;
};

struct Unfillable {
    std::string reason;
};

/// Text completion used to rephrase questions; optional.
using Rephraser = std::function<std::string(const std::string& prompt)>;

std::string positive_prompt(const std::string& question_template, const std::string& patient_history);
std::string negative_prompt(const std::string& patient_history);

/**
 * @brief Binds a template to one patient's history.
 *
 * All slots from one source share a row, so a test and its date come from the
 * same observation. A rephrased question is kept only if every bound value
 * still appears in it verbatim.
 */
std::variant<Grounded, Unfillable> ground_question(const QuestionTemplate& t, const store::PatientHistory& history,
                                                   Rng& rng, const Rephraser& rephraser = {},
                                                   std::size_t history_budget = 4000);

/// True when `value` occurs in the serialized history.
bool grounded_in(const store::PatientHistory& history, const std::string& value);

/// Generic clinical questions used for unanswerable items.
const std::vector<std::string>& negative_bank();

/// A bank question that names nothing from the history, or a rephrased one.
std::string negative_question(const store::PatientHistory& history, Rng& rng, const Rephraser& rephraser = {},
                              std::size_t history_budget = 4000);

struct GeneratorConfig {
    std::size_t n_questions = 300;
    double p_negative = 0.1;
    std::uint64_t seed = 7;
    Rephraser rephraser;
    std::size_t history_budget = 4000;
};

/// Throws InvalidArgument for a bad config, EmptyInput without patients,
/// ExhaustedRetries when no template fits any patient.
Dataset generate_dataset(const GeneratorConfig& config, const store::Store& store,
                         const std::vector<QuestionTemplate>& templates);

}  // namespace almanac::ehrqa
