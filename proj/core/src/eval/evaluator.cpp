#include "almanac/eval/evaluator.hpp"

#include "almanac/common/error.hpp"
#include "almanac/common/text.hpp"
#include "almanac/planner/planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace almanac::eval {

namespace {

void add_code(std::vector<std::string>& codes, std::string code) {
    if (std::find(codes.begin(), codes.end(), code) == codes.end()) codes.push_back(std::move(code));
}

std::optional<std::string> as_text(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number()) return format_number(v.get<double>());
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return std::nullopt;
}

std::optional<double> as_number(const json& v) {
    if (v.is_number()) return v.get<double>();
    if (!v.is_string()) return std::nullopt;
    const std::string s(trim(v.get_ref<const std::string&>()));
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    const double d = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || !std::isfinite(d)) return std::nullopt;
    return d;
}

std::string strip_type(const std::string& id) {
    const auto slash = id.find('/');
    return slash == std::string::npos ? id : id.substr(slash + 1);
}

}  // namespace

json ScoreCard::to_json() const {
    return {{"item_id", item_id},           {"template_id", template_id}, {"negative", negative},
            {"functions_ok", functions_ok}, {"params_ok", params_ok},     {"validity_ok", validity_ok},
            {"score", score},               {"failure_codes", failure_codes}};
}

ScoreCard ScoreCard::from_json(const json& j) {
    try {
        ScoreCard c;
        c.item_id = j.at("item_id").get<std::string>();
        c.template_id = j.at("template_id").get<std::string>();
        c.negative = j.at("negative").get<bool>();
        c.functions_ok = j.at("functions_ok").get<bool>();
        c.params_ok = j.at("params_ok").get<bool>();
        c.validity_ok = j.at("validity_ok").get<bool>();
        c.score = j.at("score").get<int>();
        c.failure_codes = j.at("failure_codes").get<std::vector<std::string>>();
        return c;
    } catch (const json::exception& e) {
        throw Error(Errc::MalformedRecord, e.what());
    }
}

bool value_matches(ehrqa::Matcher match, const json& gold, const json& response, bool resource_ref) {
    using ehrqa::Matcher;
    if (match == Matcher::Any) return true;
    const auto g = as_text(gold);
    const auto r = as_text(response);
    if (!g || !r) return false;
    switch (match) {
        case Matcher::Exact:
            return resource_ref ? strip_type(*g) == strip_type(*r) : *g == *r;
        case Matcher::Date: {
            const auto gd = fhir::DateTime::parse(trim(*g));
            const auto rd = fhir::DateTime::parse(trim(*r));
            if (!gd || !rd) return false;
            if (gd->date_only() || rd->date_only()) return gd->day() == rd->day();
            return gd->epoch_seconds() == rd->epoch_seconds();
        }
        case Matcher::CaseInsensitive:
            return iequals(trim(*g), trim(*r));
        case Matcher::Numeric: {
            const auto gn = as_number(gold);
            const auto rn = as_number(response);
            return gn && rn && std::fabs(*gn - *rn) <= 1e-6 * std::max(1.0, std::fabs(*gn));
        }
        case Matcher::Contains:
            return icontains(*r, std::string(trim(*g)));
        case Matcher::Any:
            return true;
    }
    return false;
}

Evaluator::Evaluator(store::Store& store, const tools::Registry& registry, const knowledge::Toolkit& toolkit)
    : store_(store),
      registry_(registry),
      runtime_(store, registry, toolkit.literature, toolkit.calculators),
      executor_(runtime_) {}

ScoreCard Evaluator::score(const ehrqa::EhrqaItem& item, const script::Script& script) const {
    ScoreCard card;
    card.item_id = item.item_id;
    card.template_id = item.template_id.value_or("");
    card.negative = item.negative;
    const auto& gold = item.gold;

    if (script.steps.empty() && gold.allow_refusal) {
        card.functions_ok = card.params_ok = card.validity_ok = true;
        card.score = 3;
        return card;
    }

    // Criterion 1: the same functions, counted with multiplicity.
    std::vector<std::string> called;
    for (const auto& s : script.steps) called.push_back(s.call.function);
    auto sorted_called = called;
    auto expected = gold.expected_functions;
    std::sort(sorted_called.begin(), sorted_called.end());
    std::sort(expected.begin(), expected.end());
    card.functions_ok = sorted_called == expected;
    if (!card.functions_ok) {
        add_code(card.failure_codes, failure_code::kFunctionMismatch);
        for (const auto& f : called) {
            if (!registry_.find(f)) add_code(card.failure_codes, "FABRICATED_TOOL");
        }
        return card;
    }
    card.score = 1;

    const tools::RefResolver resolver = [this](const fhir::ResourceId& id) { return store_.contains(id); };
    std::optional<exec::ExecutionResult> dry;
    auto dry_run = [&]() -> const exec::ExecutionResult& {
        if (!dry) dry = executor_.dry_run(script);
        return *dry;
    };

    // Criterion 2: the k-th call of a function answers the k-th gold call of that function.
    bool params_ok = true;
    std::map<std::string, std::vector<std::size_t>> gold_by_function;
    for (std::size_t i = 0; i < gold.expected_functions.size(); ++i) gold_by_function[gold.expected_functions[i]].push_back(i);
    std::map<std::string, std::size_t> seen;
    for (const auto& step : script.steps) {
        const auto& call = step.call;
        const std::size_t g = gold_by_function[call.function][seen[call.function]++];
        const tools::ToolSchema* schema = registry_.find(call.function);
        for (const auto& [param, constraint] : gold.param_constraints.at(g)) {
            if (constraint.match == ehrqa::Matcher::Any) continue;
            auto it = call.args.find(param);
            if (it == call.args.end()) {
                params_ok = false;
                continue;
            }
            json value;
            if (const auto* lit = it->second.literal()) {
                value = *lit;
            } else {
                try {
                    value = exec::resolve_ref(*it->second.ref(), dry_run().steps);
                } catch (const exec::StepFailure&) {
                    params_ok = false;
                    continue;
                }
            }
            const auto* spec = schema ? schema->param(param) : nullptr;
            const bool is_ref = spec && spec->kind == tools::ParamKind::ResourceRef;
            if (!value_matches(constraint.match, constraint.value, value, is_ref)) params_ok = false;
        }
        const auto check = tools::validate_call(registry_, call, resolver);
        for (const auto& v : check.violations) {
            params_ok = false;
            add_code(card.failure_codes, std::string(tools::to_string(v.code)));
        }
    }
    card.params_ok = params_ok;
    if (!card.params_ok) {
        card.failure_codes.insert(card.failure_codes.begin(), failure_code::kParamMismatch);
        return card;
    }
    card.score = 2;

    // Criterion 3: a sound script that dry-runs to completion.
    const auto typecheck = script::resolve_and_typecheck(script, registry_, resolver);
    for (const auto& v : typecheck.violations) add_code(card.failure_codes, v.code);
    bool valid = typecheck.ok();
    if (valid) {
        for (const auto& outcome : dry_run().steps) {
            if (outcome.error) add_code(card.failure_codes, outcome.error->code);
        }
        valid = dry_run().ok();
    }
    card.validity_ok = valid;
    if (valid) card.score = 3;
    return card;
}

ScoreCard Evaluator::score_text(const ehrqa::EhrqaItem& item, std::string_view response) const {
    try {
        return score(item, script::parse_script(planner::extract_json(response)));
    } catch (const Error& e) {
        if (e.code() != Errc::SyntaxError && e.code() != Errc::DuplicateStepId) throw;
    }
    ScoreCard card;
    card.item_id = item.item_id;
    card.template_id = item.template_id.value_or("");
    card.negative = item.negative;
    card.failure_codes = {failure_code::kUnparseable};
    return card;
}

ScoreStats stats_from_counts(const std::array<std::size_t, 4>& counts) {
    ScoreStats s;
    s.counts = counts;
    double sum = 0;
    for (std::size_t k = 0; k < 4; ++k) {
        s.n += counts[k];
        sum += static_cast<double>(k * counts[k]);
    }
    if (s.n == 0) throw Error(Errc::EmptyInput, "no scores to aggregate");
    const double n = static_cast<double>(s.n);
    s.mean = sum / n;
    double ss = 0;
    for (std::size_t k = 0; k < 4; ++k) {
        const double d = static_cast<double>(k) - s.mean;
        ss += d * d * static_cast<double>(counts[k]);
    }
    s.sd = s.n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    const double half = 1.96 * s.sd / std::sqrt(n);
    s.ci_low = s.mean - half;
    s.ci_high = s.mean + half;
    s.success_rate = static_cast<double>(counts[3]) / n;
    return s;
}

std::string present(double value) {
    char buf[32];
    // Half-up at the second decimal, so 2.445 reads 2.45 despite binary representation.
    std::snprintf(buf, sizeof buf, "%.2f", value + (value >= 0 ? 1e-9 : -1e-9));
    return buf;
}

std::string present_percent(double share) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f%%", share * 100 + 1e-9);
    return buf;
}

AggregateReport aggregate(std::vector<ScoreCard> cards, std::string label) {
    std::sort(cards.begin(), cards.end(), [](const auto& a, const auto& b) { return a.item_id < b.item_id; });
    std::array<std::size_t, 4> counts{};
    AggregateReport r;
    for (const auto& c : cards) {
        if (c.score < 0 || c.score > 3) throw Error(Errc::InvalidArgument, "score out of range for " + c.item_id);
        ++counts[static_cast<std::size_t>(c.score)];
        for (const auto& code : c.failure_codes) ++r.failure_histogram[code];
    }
    r.stats = stats_from_counts(counts);
    r.label = std::move(label);
    r.cards = std::move(cards);
    return r;
}

json AggregateReport::summary_json() const {
    const auto& s = stats;
    json counts = json::object();
    for (std::size_t k = 0; k < 4; ++k) counts[std::to_string(k)] = s.counts[k];
    return {{"label", label},
            {"n", s.n},
            {"counts", counts},
            {"mean", s.mean},
            {"sd", s.sd},
            {"ci95", {s.ci_low, s.ci_high}},
            {"success_rate", std::round(s.success_rate * 10000) / 10000},
            {"failure_histogram", failure_histogram},
            {"presentation",
             {{"mean", present(s.mean)},
              {"ci95", present(s.ci_low) + "-" + present(s.ci_high)},
              {"success_rate", present_percent(s.success_rate)}}}};
}

std::string scores_csv(const AggregateReport& report) {
    std::ostringstream out;
    out << "item_id,template_id,negative,functions_ok,params_ok,validity_ok,score,failure_codes\n";
    auto b = [](bool v) { return v ? "1" : "0"; };
    for (const auto& c : report.cards) {
        std::string codes;
        for (const auto& code : c.failure_codes) codes += (codes.empty() ? "" : ";") + code;
        out << c.item_id << ',' << c.template_id << ',' << b(c.negative) << ',' << b(c.functions_ok) << ','
            << b(c.params_ok) << ',' << b(c.validity_ok) << ',' << c.score << ',' << codes << '\n';
    }
    return out.str();
}

std::string heatmap_csv(const AggregateReport& report) {
    std::ostringstream out;
    out << "item_id,row,col,score\n";
    for (std::size_t i = 0; i < report.cards.size(); ++i) {
        out << report.cards[i].item_id << ',' << i / kHeatmapWidth << ',' << i % kHeatmapWidth << ','
            << report.cards[i].score << '\n';
    }
    return out.str();
}

std::string stacked_bars_csv(const AggregateReport& report) {
    std::ostringstream out;
    out << "label,score,count,percent\n";
    for (std::size_t k = 0; k < 4; ++k) {
        char pct[32];
        std::snprintf(pct, sizeof pct, "%.2f",
                      100.0 * static_cast<double>(report.stats.counts[k]) / static_cast<double>(report.stats.n));
        out << report.label << ',' << k << ',' << report.stats.counts[k] << ',' << pct << '\n';
    }
    return out.str();
}

void emit_report(const AggregateReport& report, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error(Errc::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
    write_file(out_dir / "scores.csv", scores_csv(report));
    write_file(out_dir / "summary.json", report.summary_json().dump(2) + "\n");
    write_file(out_dir / "heatmap.csv", heatmap_csv(report));
    write_file(out_dir / "stacked_bars.csv", stacked_bars_csv(report));
}

std::string responses_text(const std::vector<Response>& responses) {
    std::string out;
    for (const auto& r : responses) out += json{{"item_id", r.item_id}, {"response", r.text}}.dump() + "\n";
    return out;
}

std::vector<Response> parse_responses(std::string_view text) {
    std::vector<Response> out;
    std::size_t line_no = 0;
    for (const auto& line : split(text, '\n')) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const auto j = json::parse(line);
            out.push_back({j.at("item_id").get<std::string>(), j.at("response").get<std::string>()});
        } catch (const json::exception& e) {
            throw Error(Errc::MalformedRecord, "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace almanac::eval
