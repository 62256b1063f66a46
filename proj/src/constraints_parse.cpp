#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include "semdtm/constraints.hpp"
#include "semdtm/error.hpp"

namespace semdtm {

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool number_start(char c) { return std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.'; }
bool number_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '+' || c == '-' || c == '_';
}

std::string_view type_name(ArgType t) {
    switch (t) {
        case ArgType::Real: return "number";
        case ArgType::Integer: return "integer";
        case ArgType::Axis: return "axis index";
        case ArgType::Slot: return "slot name";
    }
    return "?";
}

struct RawArg {
    std::string keyword;
    std::size_t keyword_offset = 0;
    std::string_view token;
    std::size_t offset = 0;
    bool is_ident = false;
};

class Parser {
public:
    explicit Parser(std::string_view text) : text_(text) {}

    ConstraintExpr parse() {
        skip_ws();
        if (at_end()) throw ParseError("empty constraint expression", pos_);
        ConstraintExpr expr;
        expr.source_text = std::string(text_);
        while (true) {
            expr.atoms.push_back(parse_atom());
            skip_ws();
            if (at_end()) break;
            if (peek() != ',') throw ParseError("expected ',' between predicates", pos_);
            ++pos_;
            skip_ws();
            if (at_end()) throw ParseError("expected predicate name after ','", pos_);
        }
        return expr;
    }

private:
    bool at_end() const { return pos_ >= text_.size(); }
    char peek() const { return text_[pos_]; }
    void skip_ws() {
        while (!at_end() && std::isspace(static_cast<unsigned char>(peek()))) ++pos_;
    }

    std::string_view read_ident() {
        std::size_t start = pos_;
        while (!at_end() && ident_char(peek())) ++pos_;
        return text_.substr(start, pos_ - start);
    }

    PredicateAtom parse_atom() {
        std::size_t start = pos_;
        if (at_end() || !ident_start(peek())) throw ParseError("expected predicate name", pos_);
        std::string name(read_ident());
        std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
        const PredicateInfo* info = find_predicate(name);
        if (!info) throw ParseError("unknown predicate '" + name + "'", start);

        std::vector<RawArg> raw;
        skip_ws();
        if (!at_end() && peek() == '(') {
            ++pos_;
            skip_ws();
            if (!at_end() && peek() == ')') {
                ++pos_;
            } else {
                while (true) {
                    raw.push_back(parse_arg());
                    skip_ws();
                    if (at_end()) throw ParseError("expected ',' or ')'", pos_);
                    if (peek() == ')') {
                        ++pos_;
                        break;
                    }
                    if (peek() != ',') throw ParseError("expected ',' or ')'", pos_);
                    ++pos_;
                    skip_ws();
                }
            }
        } else if (!at_end() && peek() != ',') {
            throw ParseError("expected '(' or ','", pos_);
        }

        PredicateAtom atom;
        atom.name = name;
        atom.span = {start, pos_ - start};
        atom.args = bind_args(*info, raw, start);
        return atom;
    }

    RawArg parse_arg() {
        RawArg arg;
        if (at_end()) throw ParseError("expected literal", pos_);
        if (ident_start(peek())) {
            std::size_t start = pos_;
            std::string_view ident = read_ident();
            std::size_t after = pos_;
            skip_ws();
            if (!at_end() && peek() == '=') {
                arg.keyword = std::string(ident);
                arg.keyword_offset = start;
                ++pos_;
                skip_ws();
                if (at_end()) throw ParseError("expected literal", pos_);
            } else {
                pos_ = after;
                arg.token = ident;
                arg.offset = start;
                arg.is_ident = true;
                return arg;
            }
        }
        arg.offset = pos_;
        if (ident_start(peek())) {
            arg.token = read_ident();
            arg.is_ident = true;
        } else if (number_start(peek())) {
            std::size_t start = pos_;
            ++pos_;
            while (!at_end() && number_char(peek())) ++pos_;
            arg.token = text_.substr(start, pos_ - start);
        } else {
            throw ParseError("expected literal", pos_);
        }
        return arg;
    }

    static Literal convert(const RawArg& arg, ArgType type) {
        auto bad = [&](std::string_view what) -> ParseError {
            return ParseError("malformed literal '" + std::string(arg.token) + "': expected " + std::string(what),
                              arg.offset);
        };
        switch (type) {
            case ArgType::Real: {
                auto v = parse_number(arg.token);
                if (!v) throw bad(type_name(type));
                return Literal::make_real(*v);
            }
            case ArgType::Integer:
            case ArgType::Axis: {
                if (arg.is_ident) throw bad(type_name(type));
                std::string_view tok = arg.token;
                if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
                long long v = 0;
                auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
                if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty()) throw bad(type_name(type));
                if (type == ArgType::Axis && v < 0) throw bad("non-negative axis index");
                return Literal::make_integer(v, type);
            }
            case ArgType::Slot:
                if (!arg.is_ident) throw bad(type_name(type));
                return Literal::make_slot(std::string(arg.token));
        }
        throw bad("literal");
    }

    static std::vector<Literal> bind_args(const PredicateInfo& info, const std::vector<RawArg>& raw,
                                          std::size_t atom_offset) {
        const std::size_t nparams = info.params.size();
        if (info.variadic) {
            std::vector<Literal> out;
            for (const auto& arg : raw) {
                if (!arg.keyword.empty()) {
                    throw ParseError("'" + info.name + "' takes positional arguments only", arg.keyword_offset);
                }
                out.push_back(convert(arg, info.params.back().type));
            }
            if (out.empty()) {
                throw ParseError("arity mismatch: '" + info.name + "' expects at least 1 argument, got 0",
                                 atom_offset);
            }
            return out;
        }

        std::vector<std::optional<Literal>> slots(nparams);
        bool seen_keyword = false;
        std::size_t positional = 0;
        for (const auto& arg : raw) {
            std::size_t index = 0;
            if (arg.keyword.empty()) {
                if (seen_keyword) throw ParseError("positional argument after keyword argument", arg.offset);
                if (positional >= nparams) {
                    throw ParseError("arity mismatch: '" + info.name + "' expects " + std::to_string(nparams) +
                                         " argument" + (nparams == 1 ? "" : "s") + ", got " +
                                         std::to_string(raw.size()),
                                     arg.offset);
                }
                index = positional++;
            } else {
                seen_keyword = true;
                auto it = std::find_if(info.params.begin(), info.params.end(),
                                       [&](const ParamSignature& p) { return p.name == arg.keyword; });
                if (it == info.params.end()) {
                    throw ParseError("unknown keyword '" + arg.keyword + "' for '" + info.name + "'",
                                     arg.keyword_offset);
                }
                index = static_cast<std::size_t>(it - info.params.begin());
                if (slots[index]) throw ParseError("duplicate argument '" + arg.keyword + "'", arg.keyword_offset);
            }
            slots[index] = convert(arg, info.params[index].type);
        }
        std::vector<Literal> out;
        for (std::size_t i = 0; i < nparams; ++i) {
            if (!slots[i]) {
                std::size_t given = static_cast<std::size_t>(
                    std::count_if(slots.begin(), slots.end(), [](const auto& s) { return s.has_value(); }));
                throw ParseError("arity mismatch: '" + info.name + "' expects " + std::to_string(nparams) +
                                     " argument" + (nparams == 1 ? "" : "s") + ", got " + std::to_string(given) +
                                     " (missing '" + info.params[i].name + "')",
                                 atom_offset);
            }
            out.push_back(*slots[i]);
        }
        return out;
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

std::string render_literal(const Literal& lit) {
    switch (lit.type) {
        case ArgType::Real: return format_number(lit.real);
        case ArgType::Integer:
        case ArgType::Axis: return std::to_string(lit.integer);
        case ArgType::Slot: return lit.slot;
    }
    return {};
}

}  // namespace

ConstraintExpr parse_constraints(std::string_view text) { return Parser(text).parse(); }

std::string render_atom(const PredicateAtom& atom) {
    const PredicateInfo* info = find_predicate(atom.name);
    std::string out = atom.name;
    if (atom.args.empty()) return out;
    out += "(";
    for (std::size_t i = 0; i < atom.args.size(); ++i) {
        if (i) out += ", ";
        if (info && !info->variadic && i < info->params.size() && info->params[i].keyword_in_canonical) {
            out += info->params[i].name + "=";
        }
        out += render_literal(atom.args[i]);
    }
    return out + ")";
}

std::string render_constraints(const ConstraintExpr& expr) {
    std::string out;
    for (std::size_t i = 0; i < expr.atoms.size(); ++i) {
        if (i) out += ", ";
        out += render_atom(expr.atoms[i]);
    }
    return out;
}

std::vector<std::string> referenced_slots(const ConstraintExpr& expr) {
    std::vector<std::string> out;
    for (const auto& atom : expr.atoms) {
        for (const auto& arg : atom.args) {
            if (arg.type == ArgType::Slot && std::find(out.begin(), out.end(), arg.slot) == out.end()) {
                out.push_back(arg.slot);
            }
        }
    }
    return out;
}

}  // namespace semdtm
