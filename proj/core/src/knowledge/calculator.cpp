#include "almanac/knowledge/calculator.hpp"

#include "almanac/common/error.hpp"
#include "almanac/common/text.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <cmath>

namespace almanac::knowledge {

namespace {

[[noreturn]] void malformed(const std::string& id, const std::string& why) {
    throw Error(Errc::MalformedSchema, (id.empty() ? std::string("calculator") : "calculator " + id) + ": " + why);
}

std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::string required_string(const YAML::Node& node, const char* key, const std::string& id) {
    const auto v = node[key];
    if (!v || !v.IsScalar() || v.as<std::string>().empty()) malformed(id, std::string("missing '") + key + "'");
    return v.as<std::string>();
}

std::optional<double> optional_number(const YAML::Node& node, const char* key, const std::string& id) {
    const auto v = node[key];
    if (!v) return std::nullopt;
    auto d = v.IsScalar() ? parse_double(v.as<std::string>()) : std::nullopt;
    if (!d) malformed(id, std::string("'") + key + "' must be a number");
    return d;
}

CalcInput read_input(const YAML::Node& node, const std::string& id) {
    if (!node.IsMap()) malformed(id, "each input must be a mapping");
    CalcInput in;
    in.name = required_string(node, "name", id);
    const std::string kind = required_string(node, "kind", id);
    if (node["unit"]) in.unit = node["unit"].as<std::string>();
    if (node["description"]) in.description = node["description"].as<std::string>();
    if (kind == "number") {
        in.kind = CalcInput::Kind::Number;
        in.min = optional_number(node, "min", id);
        in.max = optional_number(node, "max", id);
        if (!in.min || !in.max) malformed(id, "input '" + in.name + "' needs min and max");
        if (*in.min > *in.max) malformed(id, "input '" + in.name + "' has min above max");
    } else if (kind == "enum") {
        in.kind = CalcInput::Kind::Enum;
        const auto values = node["values"];
        if (!values || !values.IsMap() || values.size() == 0) {
            malformed(id, "enum input '" + in.name + "' needs a values mapping");
        }
        for (const auto& kv : values) {
            auto d = kv.second.IsScalar() ? parse_double(kv.second.as<std::string>()) : std::nullopt;
            if (!d) malformed(id, "enum value '" + kv.first.as<std::string>() + "' must map to a number");
            in.values.emplace(kv.first.as<std::string>(), *d);
        }
    } else {
        malformed(id, "input kind must be number or enum, got '" + kind + "'");
    }
    return in;
}

void split_front_matter(std::string_view text, std::string& front, std::string& body) {
    auto lines = split(text, '\n');
    for (auto& l : lines) {
        if (!l.empty() && l.back() == '\r') l.pop_back();
    }
    if (lines.empty() || lines[0] != "---") malformed("", "file must start with a '---' front matter line");
    std::size_t i = 1;
    for (; i < lines.size() && lines[i] != "---"; ++i) front += lines[i] + "\n";
    if (i == lines.size()) malformed("", "front matter is not closed by '---'");
    for (++i; i < lines.size(); ++i) body += lines[i] + "\n";
}

std::string extract_expression(const std::string& body, const std::string& id) {
    std::vector<std::string> blocks;
    std::string current;
    bool inside = false;
    for (const auto& line : split(body, '\n')) {
        const auto t = trim(line);
        if (!inside && t == "```expression") {
            inside = true;
            current.clear();
        } else if (inside && t == "```") {
            inside = false;
            blocks.push_back(current);
        } else if (inside) {
            current += std::string(line) + "\n";
        }
    }
    if (inside) malformed(id, "unterminated expression block");
    if (blocks.size() != 1) malformed(id, "expected exactly one ```expression block, found " + std::to_string(blocks.size()));
    return std::string(trim(blocks[0]));
}

/// Corner and midpoint values for every input, enumerated as a grid with a
/// fixed cap; beyond the cap a stride keeps the walk deterministic.
void check_evaluable(const CalculatorDef& def) {
    std::vector<std::vector<double>> axes;
    for (const auto& in : def.inputs) {
        std::vector<double> axis;
        if (in.kind == CalcInput::Kind::Number) {
            axis = {*in.min, (*in.min + *in.max) / 2, *in.max};
            axis.erase(std::unique(axis.begin(), axis.end()), axis.end());
        } else {
            for (const auto& [label, v] : in.values) axis.push_back(v);
        }
        axes.push_back(std::move(axis));
    }
    std::size_t total = 1;
    for (const auto& a : axes) total = std::min<std::size_t>(total * a.size(), 1u << 30);
    constexpr std::size_t kCap = 20000;
    const std::size_t stride = total > kCap ? total / kCap : 1;
    for (std::size_t n = 0; n < total; n += stride) {
        std::map<std::string, double, std::less<>> env;
        std::size_t rest = n;
        for (std::size_t i = 0; i < axes.size(); ++i) {
            env[def.inputs[i].name] = axes[i][rest % axes[i].size()];
            rest /= axes[i].size();
        }
        try {
            evaluate(*def.expression, env);
        } catch (const Error& e) {
            malformed(def.id, "expression fails inside the declared ranges: " + e.detail());
        }
    }
}

}  // namespace

bool Band::contains(double value) const noexcept {
    return (!low || value >= *low) && (!high || value < *high);
}

const CalcInput* CalculatorDef::input(std::string_view name) const noexcept {
    for (const auto& in : inputs) {
        if (in.name == name) return &in;
    }
    return nullptr;
}

CalculatorDef parse_calculator(std::string_view markdown) {
    std::string front, body;
    split_front_matter(markdown, front, body);
    YAML::Node meta;
    try {
        meta = YAML::Load(front);
    } catch (const YAML::Exception& e) {
        malformed("", std::string("front matter is not YAML: ") + e.what());
    }
    if (!meta.IsMap()) malformed("", "front matter must be a mapping");

    CalculatorDef def;
    def.id = required_string(meta, "id", "");
    def.name = required_string(meta, "name", def.id);
    if (meta["description"]) def.description = meta["description"].as<std::string>();
    const auto inputs = meta["inputs"];
    if (!inputs || !inputs.IsSequence() || inputs.size() == 0) malformed(def.id, "needs a non-empty inputs list");
    for (const auto& node : inputs) {
        auto in = read_input(node, def.id);
        if (def.input(in.name)) malformed(def.id, "input '" + in.name + "' declared twice");
        def.inputs.push_back(std::move(in));
    }
    if (const auto bands = meta["bands"]) {
        if (!bands.IsSequence()) malformed(def.id, "bands must be a list");
        for (const auto& b : bands) {
            if (!b.IsMap()) malformed(def.id, "each band must be a mapping");
            Band band{optional_number(b, "from", def.id), optional_number(b, "below", def.id),
                      required_string(b, "label", def.id)};
            if (band.low && band.high && *band.low >= *band.high) malformed(def.id, "band '" + band.label + "' is empty");
            def.bands.push_back(std::move(band));
        }
    }

    def.expression_text = extract_expression(body, def.id);
    try {
        def.expression = parse_expression(def.expression_text);
    } catch (const SyntaxError& e) {
        malformed(def.id, "expression column " + std::to_string(e.column()) + ": expected " + e.expected());
    }
    for (const auto& v : variables(*def.expression)) {
        if (!def.input(v)) malformed(def.id, "expression uses undeclared input '" + v + "'");
    }
    check_evaluable(def);
    return def;
}

CalcArgs parse_calculator_inputs(std::string_view text) {
    CalcArgs out;
    if (trim(text).empty()) return out;
    for (const auto& part : split(text, ',')) {
        const auto eq = part.find('=');
        if (eq == std::string::npos) throw Error(Errc::InvalidArgument, "input '" + std::string(trim(part)) + "' has no '='");
        std::string name(trim(std::string_view(part).substr(0, eq)));
        std::string value(trim(std::string_view(part).substr(eq + 1)));
        if (name.empty()) throw Error(Errc::InvalidArgument, "input with an empty name");
        CalcArg arg = value;
        if (auto d = parse_double(value)) arg = *d;
        if (!out.emplace(name, std::move(arg)).second) throw Error(Errc::InvalidArgument, "input '" + name + "' repeats");
    }
    return out;
}

CalcResult evaluate_calculator(const CalculatorDef& def, const CalcArgs& args) {
    for (const auto& [name, value] : args) {
        if (!def.input(name)) throw Error(Errc::InvalidArgument, def.id + " has no input '" + name + "'");
    }
    std::map<std::string, double, std::less<>> env;
    for (const auto& in : def.inputs) {
        auto it = args.find(in.name);
        if (it == args.end()) throw Error(Errc::InputOutOfRange, in.name + " is missing");
        if (in.kind == CalcInput::Kind::Number) {
            const double* v = std::get_if<double>(&it->second);
            if (!v) throw Error(Errc::InputOutOfRange, in.name + " must be a number");
            if (*v < *in.min || *v > *in.max) {
                throw Error(Errc::InputOutOfRange, in.name + "=" + format_number(*v) + " outside [" +
                                                       format_number(*in.min) + ", " + format_number(*in.max) + "]");
            }
            env[in.name] = *v;
        } else {
            const std::string* label = std::get_if<std::string>(&it->second);
            auto value = label ? in.values.find(*label) : in.values.end();
            if (value == in.values.end()) {
                std::string allowed;
                for (const auto& [l, _] : in.values) allowed += (allowed.empty() ? "" : ", ") + l;
                throw Error(Errc::InputOutOfRange, in.name + " must be one of " + allowed);
            }
            env[in.name] = value->second;
        }
    }
    CalcResult out;
    out.value = evaluate(*def.expression, env);
    for (const auto& band : def.bands) {
        if (band.contains(out.value)) {
            out.band = band.label;
            break;
        }
    }
    return out;
}

void CalculatorLibrary::add(CalculatorDef def, std::string markdown) {
    std::string id = def.id;
    if (defs_.count(id)) throw Error(Errc::DuplicateId, "calculator " + id);
    defs_.emplace(std::move(id), std::make_pair(std::move(def), std::move(markdown)));
}

std::size_t CalculatorLibrary::load_dir(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw Error(Errc::IoError, dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".md") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        std::string text = read_file(f);
        auto def = parse_calculator(text);
        add(std::move(def), std::move(text));
    }
    return files.size();
}

const CalculatorDef* CalculatorLibrary::find(std::string_view id) const noexcept {
    auto it = defs_.find(id);
    return it == defs_.end() ? nullptr : &it->second.first;
}

std::vector<std::string> CalculatorLibrary::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, _] : defs_) out.push_back(id);
    return out;
}

CalcResult CalculatorLibrary::evaluate(std::string_view id, const CalcArgs& args) const {
    const CalculatorDef* def = find(id);
    if (!def) throw Error(Errc::UnknownCalculator, std::string(id));
    return evaluate_calculator(*def, args);
}

std::vector<Document> CalculatorLibrary::documents() const {
    std::vector<Document> out;
    for (const auto& [id, entry] : defs_) {
        const auto& [def, markdown] = entry;
        std::string body = markdown.empty() ? def.description + "\n\n" + def.expression_text : markdown;
        out.push_back(make_document("calc-" + id, def.name, std::move(body), Source::Calculator));
    }
    return out;
}

}  // namespace almanac::knowledge
