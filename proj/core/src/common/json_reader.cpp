#include "almanac/common/json_reader.hpp"

#include "almanac/common/error.hpp"

#include <cerrno>
#include <cstdlib>
#include <string>

namespace almanac {

namespace {

class Reader {
public:
    explicit Reader(std::string_view text) : text_(text) {}

    JsonNode document() {
        skip_ws();
        JsonNode node = value();
        skip_ws();
        if (pos_ != text_.size()) fail("end of input");
        return node;
    }

private:
    [[noreturn]] void fail(const std::string& expected) const {
        throw SyntaxError(line_, column_, expected);
    }

    bool at_end() const { return pos_ >= text_.size(); }
    char peek() const { return at_end() ? '\0' : text_[pos_]; }

    void advance() {
        if (text_[pos_] == '\n') {
            ++line_;
            column_ = 1;
        } else {
            ++column_;
        }
        ++pos_;
    }

    void skip_ws() {
        while (!at_end()) {
            char c = text_[pos_];
            if (c != ' ' && c != '\t' && c != '\n' && c != '\r') break;
            advance();
        }
    }

    void expect(char c, const char* what) {
        if (peek() != c) fail(what);
        advance();
    }

    void literal(std::string_view word) {
        for (char c : word) {
            if (peek() != c) fail(std::string("'") + std::string(word) + "'");
            advance();
        }
    }

    JsonNode value() {
        JsonNode node;
        node.line = line_;
        node.column = column_;
        switch (peek()) {
            case '{':
                object(node);
                break;
            case '[':
                array(node);
                break;
            case '"':
                node.type = JsonNode::Type::String;
                node.scalar = string();
                break;
            case 't':
                literal("true");
                node.type = JsonNode::Type::Boolean;
                node.scalar = true;
                break;
            case 'f':
                literal("false");
                node.type = JsonNode::Type::Boolean;
                node.scalar = false;
                break;
            case 'n':
                literal("null");
                node.type = JsonNode::Type::Null;
                node.scalar = nullptr;
                break;
            default:
                if (peek() == '-' || (peek() >= '0' && peek() <= '9')) {
                    node.type = JsonNode::Type::Number;
                    node.scalar = number();
                } else {
                    fail("a JSON value");
                }
        }
        return node;
    }

    void object(JsonNode& node) {
        node.type = JsonNode::Type::Object;
        advance();
        skip_ws();
        if (peek() == '}') {
            advance();
            return;
        }
        while (true) {
            skip_ws();
            if (peek() != '"') fail("object key string");
            std::size_t key_line = line_, key_col = column_;
            std::string key = string();
            for (const auto& existing : node.keys) {
                if (existing == key) throw SyntaxError(key_line, key_col, "unique object key");
            }
            skip_ws();
            expect(':', "':'");
            skip_ws();
            node.keys.push_back(std::move(key));
            node.children.push_back(value());
            skip_ws();
            if (peek() == ',') {
                advance();
                continue;
            }
            expect('}', "',' or '}'");
            return;
        }
    }

    void array(JsonNode& node) {
        node.type = JsonNode::Type::Array;
        advance();
        skip_ws();
        if (peek() == ']') {
            advance();
            return;
        }
        while (true) {
            skip_ws();
            node.children.push_back(value());
            skip_ws();
            if (peek() == ',') {
                advance();
                continue;
            }
            expect(']', "',' or ']'");
            return;
        }
    }

    unsigned hex4() {
        unsigned code = 0;
        for (int i = 0; i < 4; ++i) {
            char c = peek();
            unsigned digit;
            if (c >= '0' && c <= '9') digit = static_cast<unsigned>(c - '0');
            else if (c >= 'a' && c <= 'f') digit = static_cast<unsigned>(c - 'a' + 10);
            else if (c >= 'A' && c <= 'F') digit = static_cast<unsigned>(c - 'A' + 10);
            else fail("hex digit");
            code = code * 16 + digit;
            advance();
        }
        return code;
    }

    static void append_utf8(std::string& out, unsigned cp) {
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }

    std::string string() {
        advance();  // opening quote
        std::string out;
        while (true) {
            if (at_end()) fail("closing '\"'");
            char c = peek();
            if (c == '"') {
                advance();
                return out;
            }
            if (static_cast<unsigned char>(c) < 0x20) fail("escaped control character");
            if (c != '\\') {
                out.push_back(c);
                advance();
                continue;
            }
            advance();
            char e = peek();
            switch (e) {
                case '"': out.push_back('"'); break;
                case '\\': out.push_back('\\'); break;
                case '/': out.push_back('/'); break;
                case 'b': out.push_back('\b'); break;
                case 'f': out.push_back('\f'); break;
                case 'n': out.push_back('\n'); break;
                case 'r': out.push_back('\r'); break;
                case 't': out.push_back('\t'); break;
                case 'u': {
                    advance();
                    unsigned cp = hex4();
                    if (cp >= 0xD800 && cp <= 0xDBFF) {
                        if (peek() != '\\') fail("low surrogate escape");
                        advance();
                        if (peek() != 'u') fail("low surrogate escape");
                        advance();
                        unsigned low = hex4();
                        if (low < 0xDC00 || low > 0xDFFF) fail("low surrogate");
                        cp = 0x10000 + ((cp - 0xD800) << 10) + (low - 0xDC00);
                    } else if (cp >= 0xDC00 && cp <= 0xDFFF) {
                        fail("high surrogate before low surrogate");
                    }
                    append_utf8(out, cp);
                    continue;
                }
                default:
                    fail("valid escape sequence");
            }
            advance();
        }
    }

    nlohmann::json number() {
        std::size_t start = pos_;
        bool integral = true;
        if (peek() == '-') advance();
        if (peek() == '0') {
            advance();
        } else if (peek() >= '1' && peek() <= '9') {
            while (peek() >= '0' && peek() <= '9') advance();
        } else {
            fail("digit");
        }
        if (peek() == '.') {
            integral = false;
            advance();
            if (!(peek() >= '0' && peek() <= '9')) fail("digit after '.'");
            while (peek() >= '0' && peek() <= '9') advance();
        }
        if (peek() == 'e' || peek() == 'E') {
            integral = false;
            advance();
            if (peek() == '+' || peek() == '-') advance();
            if (!(peek() >= '0' && peek() <= '9')) fail("exponent digit");
            while (peek() >= '0' && peek() <= '9') advance();
        }
        std::string token(text_.substr(start, pos_ - start));
        if (integral) {
            errno = 0;
            long long v = std::strtoll(token.c_str(), nullptr, 10);
            if (errno != ERANGE) return v;
        }
        return std::strtod(token.c_str(), nullptr);
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t column_ = 1;
};

}  // namespace

const JsonNode* JsonNode::find(std::string_view key) const noexcept {
    if (type != Type::Object) return nullptr;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (keys[i] == key) return &children[i];
    }
    return nullptr;
}

nlohmann::json JsonNode::to_json() const {
    switch (type) {
        case Type::Array: {
            auto out = nlohmann::json::array();
            for (const auto& c : children) out.push_back(c.to_json());
            return out;
        }
        case Type::Object: {
            auto out = nlohmann::json::object();
            for (std::size_t i = 0; i < keys.size(); ++i) out[keys[i]] = children[i].to_json();
            return out;
        }
        default:
            return scalar;
    }
}

JsonNode read_json(std::string_view text) {
    return Reader(text).document();
}

std::string_view type_name(JsonNode::Type type) noexcept {
    switch (type) {
        case JsonNode::Type::Null: return "null";
        case JsonNode::Type::Boolean: return "boolean";
        case JsonNode::Type::Number: return "number";
        case JsonNode::Type::String: return "string";
        case JsonNode::Type::Array: return "array";
        case JsonNode::Type::Object: return "object";
    }
    return "unknown";
}

}  // namespace almanac
