#pragma once

// The .wig scenario-description language: declare registers, states and
// bases, then drive premeasure/decohere/undo/apply/measure steps and check
// probability, correlation and fidelity assertions. Hand-written lexer and
// recursive-descent parser with spanned diagnostics; parsing is total and
// never throws. Validation enforces dimensions, orthonormality and the
// register lifecycle (fresh -> premeasured* -> decohered? -> measured?).

#include <cctype>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "wigner/meas.hpp"
#include "wigner/qcore.hpp"

namespace wigner::protoparse {

using qcore::complexd;

// ---------------------------------------------------------------------------
// Diagnostics

struct SourceSpan {
  int line = 1;
  int col = 1;
  std::size_t length = 0;
};

struct Diagnostic {
  enum class Severity { Error, Warning };
  Severity severity = Severity::Error;
  std::string message;
  SourceSpan span;
};

inline std::string format_diagnostic(const std::string& file, const Diagnostic& d) {
  std::ostringstream os;
  os << file << ":" << d.span.line << ":" << d.span.col << ": "
     << (d.severity == Diagnostic::Severity::Error ? "error" : "warning") << ": " << d.message;
  return os.str();
}

inline bool has_errors(const std::vector<Diagnostic>& diags) {
  for (const auto& d : diags) {
    if (d.severity == Diagnostic::Severity::Error) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// AST

struct KetTerm {
  complexd coefficient{1.0, 0.0};
  std::string digits;
  SourceSpan span;
};

struct KetSum {
  std::vector<KetTerm> terms;
};

struct RegisterDecl {
  std::string name;
  std::size_t dimension = 2;
  SourceSpan span;
};

struct StateDecl {
  std::string name;
  KetSum sum;
  std::vector<std::string> registers;
  SourceSpan span;
};

struct BasisVectorDecl {
  KetSum sum;
  std::optional<std::string> label;
  std::optional<double> eigenvalue;
  SourceSpan span;
};

struct BasisDecl {
  std::string name;
  std::vector<std::string> registers;
  bool is_mub = false;
  int mub_index = 0;
  bool partial = false;
  std::vector<BasisVectorDecl> vectors;
  SourceSpan span;
};

struct PremeasureStep {
  std::string system;
  std::string basis;
  std::vector<std::string> ancillas;
  std::optional<std::string> record_name;
  SourceSpan span;
};

struct DecohereStep {
  std::vector<std::string> registers;
  std::string basis;
  double strength = 1.0;
  SourceSpan span;
};

struct UndoStep {
  std::string record;
  SourceSpan span;
};

struct MeasureStep {
  std::string result_name;
  std::vector<std::string> registers;
  std::string basis;
  SourceSpan span;
};

struct ApplyStep {
  enum class Gate { Hadamard, Cnot, Phase, Matrix };
  Gate gate = Gate::Hadamard;
  double phase = 0.0;
  std::vector<std::vector<complexd>> matrix;
  std::vector<std::string> registers;
  SourceSpan span;
};

struct ProbTerm {
  std::string measurement;
  std::string outcome;
};

struct AssertStmt {
  enum class Kind { Prob, Correlation, Fidelity };
  Kind kind = Kind::Prob;
  std::vector<ProbTerm> prob_terms;
  std::vector<std::string> correlation_measurements;
  std::vector<std::string> fidelity_registers;
  std::string fidelity_state;
  double expected = 0.0;
  double tolerance = 0.0;
  SourceSpan span;
};

using Statement = std::variant<RegisterDecl, StateDecl, BasisDecl, PremeasureStep, DecohereStep,
                               UndoStep, MeasureStep, ApplyStep, AssertStmt>;

struct ProtocolAST {
  std::vector<Statement> statements;
};

struct ParseResult {
  ProtocolAST ast;
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return !has_errors(diagnostics); }
};

// ---------------------------------------------------------------------------
// Lexer

namespace detail {

enum class TokKind { End, Ident, Number, String, Ket, Punct, EqEq };

struct Token {
  TokKind kind = TokKind::End;
  std::string text;
  complexd value{0.0, 0.0};
  char punct = 0;
  SourceSpan span;
};

struct LexResult {
  std::vector<Token> tokens;
  std::vector<Diagnostic> diagnostics;
};

inline LexResult lex(std::string_view src) {
  LexResult out;
  std::size_t i = 0;
  int line = 1, col = 1;

  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n && i < src.size(); ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  auto span_here = [&](std::size_t len) { return SourceSpan{line, col, len}; };

  while (i < src.size()) {
    const char c = src[i];
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      advance(1);
      continue;
    }
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) {
        ++j;
      }
      Token t;
      t.kind = TokKind::Ident;
      t.text = std::string(src.substr(i, j - i));
      t.span = span_here(j - i);
      out.tokens.push_back(std::move(t));
      advance(j - i);
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      if (j < src.size() && src[j] == '.') {
        ++j;
        while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      }
      if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
        if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
          while (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) ++k;
          j = k;
        }
      }
      bool imaginary = false;
      if (j < src.size() && src[j] == 'i' &&
          (j + 1 >= src.size() || (!std::isalnum(static_cast<unsigned char>(src[j + 1])) &&
                                   src[j + 1] != '_'))) {
        imaginary = true;
      }
      Token t;
      t.kind = TokKind::Number;
      t.text = std::string(src.substr(i, j - i));
      const double mag = std::strtod(t.text.c_str(), nullptr);
      t.value = imaginary ? complexd{0.0, mag} : complexd{mag, 0.0};
      t.span = span_here(j - i + (imaginary ? 1 : 0));
      out.tokens.push_back(std::move(t));
      advance(j - i + (imaginary ? 1 : 0));
      continue;
    }
    if (c == '"') {
      std::size_t j = i + 1;
      while (j < src.size() && src[j] != '"' && src[j] != '\n') ++j;
      if (j >= src.size() || src[j] != '"') {
        out.diagnostics.push_back({Diagnostic::Severity::Error, "unterminated string literal",
                                   span_here(j - i)});
        advance(j - i);
        continue;
      }
      Token t;
      t.kind = TokKind::String;
      t.text = std::string(src.substr(i + 1, j - i - 1));
      t.span = span_here(j - i + 1);
      out.tokens.push_back(std::move(t));
      advance(j - i + 1);
      continue;
    }
    if (c == '|') {
      std::size_t j = i + 1;
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      if (j >= src.size() || src[j] != '>' || j == i + 1) {
        out.diagnostics.push_back({Diagnostic::Severity::Error,
                                   "malformed ket (expected |digits>)", span_here(j - i)});
        advance(1);
        continue;
      }
      Token t;
      t.kind = TokKind::Ket;
      t.text = std::string(src.substr(i + 1, j - i - 1));
      t.span = span_here(j - i + 1);
      out.tokens.push_back(std::move(t));
      advance(j - i + 1);
      continue;
    }
    if (c == '=' && i + 1 < src.size() && src[i + 1] == '=') {
      Token t;
      t.kind = TokKind::EqEq;
      t.text = "==";
      t.span = span_here(2);
      out.tokens.push_back(std::move(t));
      advance(2);
      continue;
    }
    if (std::string_view(";,:=(){}[]+-*/").find(c) != std::string_view::npos) {
      Token t;
      t.kind = TokKind::Punct;
      t.punct = c;
      t.text = std::string(1, c);
      t.span = span_here(1);
      out.tokens.push_back(std::move(t));
      advance(1);
      continue;
    }
    out.diagnostics.push_back({Diagnostic::Severity::Error,
                               std::string("unexpected character '") + c + "'", span_here(1)});
    advance(1);
  }
  Token end;
  end.kind = TokKind::End;
  end.span = span_here(0);
  out.tokens.push_back(std::move(end));
  return out;
}

// ---------------------------------------------------------------------------
// Parser

class Parser {
 public:
  explicit Parser(std::string_view src) {
    auto lexed = lex(src);
    tokens_ = std::move(lexed.tokens);
    result_.diagnostics = std::move(lexed.diagnostics);
  }

  ParseResult run() {
    while (!at_end()) {
      const std::size_t before = pos_;
      parse_statement();
      if (pos_ == before) skip_statement();  // always make progress
    }
    return std::move(result_);
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    const std::size_t k = pos_ + ahead;
    return k < tokens_.size() ? tokens_[k] : tokens_.back();
  }
  const Token& advance() {
    const Token& t = tokens_[pos_];
    if (pos_ + 1 < tokens_.size()) ++pos_;
    return t;
  }
  bool at_end() const { return peek().kind == TokKind::End; }

  bool at_punct(char c) const { return peek().kind == TokKind::Punct && peek().punct == c; }
  bool at_ident(std::string_view text) const {
    return peek().kind == TokKind::Ident && peek().text == text;
  }

  void error_here(std::string message) {
    result_.diagnostics.push_back({Diagnostic::Severity::Error, std::move(message), peek().span});
  }

  // after an error: skip to just past the next ';'
  void skip_statement() {
    while (!at_end()) {
      if (at_punct(';')) {
        advance();
        return;
      }
      advance();
    }
  }

  bool expect_punct(char c, const char* what) {
    if (at_punct(c)) {
      advance();
      return true;
    }
    error_here(std::string("expected '") + c + "' " + what);
    return false;
  }

  std::optional<std::string> expect_ident(const char* what) {
    if (peek().kind == TokKind::Ident) return advance().text;
    error_here(std::string("expected ") + what);
    return std::nullopt;
  }

  bool expect_keyword(std::string_view word) {
    if (at_ident(word)) {
      advance();
      return true;
    }
    error_here("expected '" + std::string(word) + "'");
    return false;
  }

  std::optional<std::vector<std::string>> parse_ident_list(const char* what) {
    std::vector<std::string> names;
    auto first = expect_ident(what);
    if (!first) return std::nullopt;
    names.push_back(*first);
    while (at_punct(',')) {
      advance();
      auto next = expect_ident(what);
      if (!next) return std::nullopt;
      names.push_back(*next);
    }
    return names;
  }

  // --- constant complex expressions ---

  std::optional<complexd> parse_cexpr() {
    auto lhs = parse_cterm();
    if (!lhs) return std::nullopt;
    while (at_punct('+') || at_punct('-')) {
      const char op = advance().punct;
      auto rhs = parse_cterm();
      if (!rhs) return std::nullopt;
      *lhs = (op == '+') ? *lhs + *rhs : *lhs - *rhs;
    }
    return lhs;
  }

  std::optional<complexd> parse_cterm() {
    auto lhs = parse_cfactor();
    if (!lhs) return std::nullopt;
    // '*' immediately before a ket is the coefficient separator, not a product
    while ((at_punct('*') && peek(1).kind != TokKind::Ket) || at_punct('/')) {
      const char op = advance().punct;
      auto rhs = parse_cfactor();
      if (!rhs) return std::nullopt;
      if (op == '*') {
        *lhs = *lhs * *rhs;
      } else {
        if (*rhs == complexd{0.0, 0.0}) {
          error_here("division by zero in constant expression");
          return std::nullopt;
        }
        *lhs = *lhs / *rhs;
      }
    }
    return lhs;
  }

  std::optional<complexd> parse_cfactor() {
    if (at_punct('-')) {
      advance();
      auto v = parse_cfactor();
      if (!v) return std::nullopt;
      return -*v;
    }
    if (at_punct('+')) {
      advance();
      return parse_cfactor();
    }
    return parse_cprimary();
  }

  std::optional<complexd> parse_func(complexd (*fn)(const complexd&)) {
    advance();  // function name
    if (!expect_punct('(', "after function name")) return std::nullopt;
    auto arg = parse_cexpr();
    if (!arg) return std::nullopt;
    if (!expect_punct(')', "to close function argument")) return std::nullopt;
    return fn(*arg);
  }

  std::optional<complexd> parse_cprimary() {
    if (peek().kind == TokKind::Number) return advance().value;
    if (at_ident("pi")) {
      advance();
      return complexd{std::numbers::pi, 0.0};
    }
    if (at_ident("i")) {
      advance();
      return complexd{0.0, 1.0};
    }
    if (at_ident("sqrt")) {
      return parse_func(+[](const complexd& z) { return std::sqrt(z); });
    }
    if (at_ident("exp")) {
      return parse_func(+[](const complexd& z) { return std::exp(z); });
    }
    if (at_ident("cos")) {
      return parse_func(+[](const complexd& z) { return std::cos(z); });
    }
    if (at_ident("sin")) {
      return parse_func(+[](const complexd& z) { return std::sin(z); });
    }
    if (at_punct('(')) {
      advance();
      auto v = parse_cexpr();
      if (!v) return std::nullopt;
      if (!expect_punct(')', "to close expression")) return std::nullopt;
      return v;
    }
    error_here("malformed complex literal");
    return std::nullopt;
  }

  std::optional<double> parse_real(const char* what) {
    const SourceSpan where = peek().span;
    auto v = parse_cexpr();
    if (!v) return std::nullopt;
    if (std::abs(v->imag()) > 1e-12) {
      result_.diagnostics.push_back(
          {Diagnostic::Severity::Error, std::string(what) + " must be real", where});
      return std::nullopt;
    }
    return v->real();
  }

  // --- kets ---

  std::optional<KetSum> parse_ketsum() {
    KetSum sum;
    double sign = 1.0;
    if (at_punct('-')) {
      advance();
      sign = -1.0;
    } else if (at_punct('+')) {
      advance();
    }
    while (true) {
      auto term = parse_ketterm(sign);
      if (!term) return std::nullopt;
      sum.terms.push_back(std::move(*term));
      if (at_punct('+') || at_punct('-')) {
        // a following ket term, or the tail of a coefficient expression;
        // coefficient expressions are consumed inside parse_ketterm, so any
        // +/- here separates terms.
        sign = advance().punct == '+' ? 1.0 : -1.0;
        continue;
      }
      break;
    }
    return sum;
  }

  std::optional<KetTerm> parse_ketterm(double sign) {
    KetTerm term;
    term.span = peek().span;
    if (peek().kind == TokKind::Ket) {
      term.coefficient = complexd{sign, 0.0};
      term.digits = advance().text;
      return term;
    }
    auto coef = parse_cterm();  // products/quotients bind to the ket; +/- separates terms
    if (!coef) return std::nullopt;
    if (at_punct('*')) advance();
    if (peek().kind != TokKind::Ket) {
      error_here("expected ket after coefficient");
      return std::nullopt;
    }
    term.coefficient = sign * *coef;
    term.digits = advance().text;
    return term;
  }

  // --- statements ---

  void parse_statement() {
    if (at_ident("register")) {
      parse_register();
    } else if (at_ident("state")) {
      parse_state();
    } else if (at_ident("basis")) {
      parse_basis();
    } else if (at_ident("premeasure")) {
      parse_premeasure();
    } else if (at_ident("decohere")) {
      parse_decohere();
    } else if (at_ident("undo")) {
      parse_undo();
    } else if (at_ident("measure")) {
      parse_measure();
    } else if (at_ident("apply")) {
      parse_apply();
    } else if (at_ident("assert")) {
      parse_assert();
    } else {
      error_here("expected a statement (register, state, basis, premeasure, decohere, undo, "
                 "measure, apply or assert)");
      skip_statement();
    }
  }

  void parse_register() {
    RegisterDecl decl;
    decl.span = advance().span;  // 'register'
    auto name = expect_ident("register name");
    if (!name) return skip_statement();
    decl.name = *name;
    if (at_ident("qubit")) {
      advance();
      decl.dimension = 2;
    } else if (at_ident("qutrit")) {
      advance();
      decl.dimension = 3;
    } else if (at_ident("dim")) {
      advance();
      if (peek().kind != TokKind::Number || peek().value.imag() != 0.0) {
        error_here("expected integer dimension");
        return skip_statement();
      }
      decl.dimension = static_cast<std::size_t>(advance().value.real());
    } else {
      error_here("expected 'qubit', 'qutrit' or 'dim N'");
      return skip_statement();
    }
    if (!expect_punct(';', "after register declaration")) return skip_statement();
    result_.ast.statements.push_back(std::move(decl));
  }

  void parse_state() {
    StateDecl decl;
    decl.span = advance().span;  // 'state'
    auto name = expect_ident("state name");
    if (!name) return skip_statement();
    decl.name = *name;
    if (!expect_punct('=', "after state name")) return skip_statement();
    auto sum = parse_ketsum();
    if (!sum) return skip_statement();
    decl.sum = std::move(*sum);
    if (!expect_keyword("on")) return skip_statement();
    auto regs = parse_ident_list("register name");
    if (!regs) return skip_statement();
    decl.registers = std::move(*regs);
    if (!expect_punct(';', "after state declaration")) return skip_statement();
    result_.ast.statements.push_back(std::move(decl));
  }

  void parse_basis() {
    BasisDecl decl;
    decl.span = advance().span;  // 'basis'
    auto name = expect_ident("basis name");
    if (!name) return skip_statement();
    decl.name = *name;
    if (!expect_keyword("on")) return skip_statement();
    auto regs = parse_ident_list("register name");
    if (!regs) return skip_statement();
    decl.registers = std::move(*regs);
    if (!expect_punct('=', "after basis registers")) return skip_statement();

    if (at_ident("mub")) {
      advance();
      decl.is_mub = true;
      if (!expect_punct('(', "after 'mub'")) return skip_statement();
      if (peek().kind != TokKind::Number) {
        error_here("expected mub index");
        return skip_statement();
      }
      decl.mub_index = static_cast<int>(advance().value.real());
      if (!expect_punct(')', "after mub index")) return skip_statement();
    } else {
      if (at_ident("partial")) {
        advance();
        decl.partial = true;
      }
      if (!expect_punct('{', "to open basis vector list")) return skip_statement();
      while (true) {
        BasisVectorDecl vec;
        vec.span = peek().span;
        auto sum = parse_ketsum();
        if (!sum) return skip_statement();
        vec.sum = std::move(*sum);
        if (at_ident("label")) {
          advance();
          if (peek().kind != TokKind::String) {
            error_here("expected string after 'label'");
            return skip_statement();
          }
          vec.label = advance().text;
        }
        if (at_ident("eig")) {
          advance();
          auto e = parse_real("eigenvalue");
          if (!e) return skip_statement();
          vec.eigenvalue = *e;
        }
        decl.vectors.push_back(std::move(vec));
        if (at_punct(',')) {
          advance();
          continue;
        }
        break;
      }
      if (!expect_punct('}', "to close basis vector list")) return skip_statement();
    }
    if (!expect_punct(';', "after basis declaration")) return skip_statement();
    result_.ast.statements.push_back(std::move(decl));
  }

  void parse_premeasure() {
    PremeasureStep step;
    step.span = advance().span;  // 'premeasure'
    auto sys = expect_ident("system register");
    if (!sys) return skip_statement();
    step.system = *sys;
    if (!expect_keyword("in")) return skip_statement();
    auto basis = expect_ident("basis name");
    if (!basis) return skip_statement();
    step.basis = *basis;
    if (!expect_keyword("into")) return skip_statement();
    auto ancillas = parse_ident_list("ancilla register");
    if (!ancillas) return skip_statement();
    step.ancillas = std::move(*ancillas);
    if (at_ident("as")) {
      advance();
      auto rec = expect_ident("record name");
      if (!rec) return skip_statement();
      step.record_name = *rec;
    }
    if (!expect_punct(';', "after premeasure step")) return skip_statement();
    result_.ast.statements.push_back(std::move(step));
  }

  void parse_decohere() {
    DecohereStep step;
    step.span = advance().span;  // 'decohere'
    auto regs = parse_ident_list("register name");
    if (!regs) return skip_statement();
    step.registers = std::move(*regs);
    if (!expect_keyword("in")) return skip_statement();
    auto basis = expect_ident("basis name");
    if (!basis) return skip_statement();
    step.basis = *basis;
    if (at_ident("strength")) {
      advance();
      auto s = parse_real("strength");
      if (!s) return skip_statement();
      step.strength = *s;
    }
    if (!expect_punct(';', "after decohere step")) return skip_statement();
    result_.ast.statements.push_back(std::move(step));
  }

  void parse_undo() {
    UndoStep step;
    step.span = advance().span;  // 'undo'
    auto rec = expect_ident("record name");
    if (!rec) return skip_statement();
    step.record = *rec;
    if (!expect_punct(';', "after undo step")) return skip_statement();
    result_.ast.statements.push_back(std::move(step));
  }

  void parse_measure() {
    MeasureStep step;
    step.span = advance().span;  // 'measure'
    auto name = expect_ident("measurement result name");
    if (!name) return skip_statement();
    step.result_name = *name;
    if (!expect_punct(':', "after measurement name")) return skip_statement();
    auto regs = parse_ident_list("register name");
    if (!regs) return skip_statement();
    step.registers = std::move(*regs);
    if (!expect_keyword("in")) return skip_statement();
    auto basis = expect_ident("basis name");
    if (!basis) return skip_statement();
    step.basis = *basis;
    if (!expect_punct(';', "after measure step")) return skip_statement();
    result_.ast.statements.push_back(std::move(step));
  }

  void parse_apply() {
    ApplyStep step;
    step.span = advance().span;  // 'apply'
    if (at_ident("hadamard")) {
      advance();
      step.gate = ApplyStep::Gate::Hadamard;
    } else if (at_ident("cnot")) {
      advance();
      step.gate = ApplyStep::Gate::Cnot;
    } else if (at_ident("phase")) {
      advance();
      step.gate = ApplyStep::Gate::Phase;
      if (!expect_punct('(', "after 'phase'")) return skip_statement();
      auto phi = parse_real("phase angle");
      if (!phi) return skip_statement();
      step.phase = *phi;
      if (!expect_punct(')', "after phase angle")) return skip_statement();
    } else if (at_punct('[')) {
      step.gate = ApplyStep::Gate::Matrix;
      advance();
      while (true) {
        if (!expect_punct('[', "to open matrix row")) return skip_statement();
        std::vector<complexd> row;
        while (true) {
          auto v = parse_cexpr();
          if (!v) return skip_statement();
          row.push_back(*v);
          if (at_punct(',')) {
            advance();
            continue;
          }
          break;
        }
        if (!expect_punct(']', "to close matrix row")) return skip_statement();
        step.matrix.push_back(std::move(row));
        if (at_punct(',')) {
          advance();
          continue;
        }
        break;
      }
      if (!expect_punct(']', "to close matrix")) return skip_statement();
    } else {
      error_here("expected a gate (hadamard, cnot, phase(...) or a matrix literal)");
      return skip_statement();
    }
    if (!expect_keyword("on")) return skip_statement();
    auto regs = parse_ident_list("register name");
    if (!regs) return skip_statement();
    step.registers = std::move(*regs);
    if (!expect_punct(';', "after apply step")) return skip_statement();
    result_.ast.statements.push_back(std::move(step));
  }

  void parse_assert() {
    AssertStmt stmt;
    stmt.span = advance().span;  // 'assert'
    if (at_ident("prob")) {
      advance();
      stmt.kind = AssertStmt::Kind::Prob;
      if (!expect_punct('(', "after 'prob'")) return skip_statement();
      while (true) {
        ProbTerm term;
        auto name = expect_ident("measurement name");
        if (!name) return skip_statement();
        term.measurement = *name;
        if (!expect_punct('=', "between measurement and outcome")) return skip_statement();
        if (peek().kind != TokKind::String) {
          error_here("expected outcome label string");
          return skip_statement();
        }
        term.outcome = advance().text;
        stmt.prob_terms.push_back(std::move(term));
        if (at_punct(',')) {
          advance();
          continue;
        }
        break;
      }
      if (!expect_punct(')', "to close prob(...)")) return skip_statement();
    } else if (at_ident("correlation")) {
      advance();
      stmt.kind = AssertStmt::Kind::Correlation;
      if (!expect_punct('(', "after 'correlation'")) return skip_statement();
      auto names = parse_ident_list("measurement name");
      if (!names) return skip_statement();
      stmt.correlation_measurements = std::move(*names);
      if (!expect_punct(')', "to close correlation(...)")) return skip_statement();
    } else if (at_ident("fidelity")) {
      advance();
      stmt.kind = AssertStmt::Kind::Fidelity;
      if (!expect_punct('(', "after 'fidelity'")) return skip_statement();
      auto regs = parse_ident_list("register name");
      if (!regs) return skip_statement();
      stmt.fidelity_registers = std::move(*regs);
      if (!expect_keyword("vs")) return skip_statement();
      auto st = expect_ident("state name");
      if (!st) return skip_statement();
      stmt.fidelity_state = *st;
      if (!expect_punct(')', "to close fidelity(...)")) return skip_statement();
    } else {
      error_here("expected 'prob', 'correlation' or 'fidelity'");
      return skip_statement();
    }
    if (peek().kind != TokKind::EqEq) {
      error_here("expected '==' in assertion");
      return skip_statement();
    }
    advance();
    auto expected = parse_real("expected value");
    if (!expected) return skip_statement();
    stmt.expected = *expected;
    if (!expect_keyword("tol")) return skip_statement();
    auto tol = parse_real("tolerance");
    if (!tol) return skip_statement();
    stmt.tolerance = *tol;
    if (!expect_punct(';', "after assertion")) return skip_statement();
    result_.ast.statements.push_back(std::move(stmt));
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  ParseResult result_;
};

}  // namespace detail

inline ParseResult parse(std::string_view source) { return detail::Parser(source).run(); }

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline std::optional<std::vector<complexd>> compile_ketsum(const KetSum& sum,
                                                           const std::vector<std::size_t>& dims,
                                                           std::vector<Diagnostic>* diags) {
  std::size_t dim = 1;
  for (std::size_t d : dims) dim *= d;
  std::vector<complexd> v(dim, complexd{0.0, 0.0});
  for (const auto& term : sum.terms) {
    if (term.digits.size() != dims.size()) {
      if (diags) {
        diags->push_back({Diagnostic::Severity::Error,
                          "ket has " + std::to_string(term.digits.size()) +
                              " digit(s) but the register list has " +
                              std::to_string(dims.size()),
                          term.span});
      }
      return std::nullopt;
    }
    std::size_t flat = 0;
    for (std::size_t k = 0; k < dims.size(); ++k) {
      const std::size_t digit = static_cast<std::size_t>(term.digits[k] - '0');
      if (digit >= dims[k]) {
        if (diags) {
          diags->push_back({Diagnostic::Severity::Error,
                            "ket digit " + std::to_string(digit) +
                                " out of range for a dimension-" + std::to_string(dims[k]) +
                                " register",
                            term.span});
        }
        return std::nullopt;
      }
      flat = flat * dims[k] + digit;
    }
    v[flat] += term.coefficient;
  }
  return v;
}

struct BasisInfo {
  std::vector<std::size_t> dims;  // dimension shape the basis applies to
  std::vector<std::string> labels;
  bool partial = false;
  bool has_eigenvalues = false;
  SourceSpan span;
};

// Compiles a basis declaration into vectors + metadata; reports problems as
// diagnostics. The register list of the declaration fixes only the shape.
inline std::optional<BasisInfo> check_basis(const BasisDecl& decl,
                                            const std::map<std::string, std::size_t>& reg_dims,
                                            std::vector<Diagnostic>& diags,
                                            std::vector<std::vector<complexd>>* out_vectors) {
  BasisInfo info;
  info.span = decl.span;
  for (const auto& reg : decl.registers) {
    auto it = reg_dims.find(reg);
    if (it == reg_dims.end()) {
      diags.push_back({Diagnostic::Severity::Error, "unknown register '" + reg + "'", decl.span});
      return std::nullopt;
    }
    info.dims.push_back(it->second);
  }
  std::size_t dim = 1;
  for (std::size_t d : info.dims) dim *= d;

  if (decl.is_mub) {
    if (info.dims.size() != 1 || info.dims[0] != 2) {
      diags.push_back({Diagnostic::Severity::Error, "mub bases are defined on a single qubit",
                       decl.span});
      return std::nullopt;
    }
    if (decl.mub_index < 1 || decl.mub_index > 3) {
      diags.push_back({Diagnostic::Severity::Error, "mub index must be 1, 2 or 3", decl.span});
      return std::nullopt;
    }
    info.labels = {"+1", "-1"};
    info.has_eigenvalues = true;
    if (out_vectors) {
      const auto b = meas::mub_basis(decl.mub_index);
      out_vectors->push_back(b.vector(0));
      out_vectors->push_back(b.vector(1));
    }
    return info;
  }

  std::vector<std::vector<complexd>> vectors;
  std::size_t eig_count = 0;
  for (std::size_t k = 0; k < decl.vectors.size(); ++k) {
    const auto& vd = decl.vectors[k];
    auto v = compile_ketsum(vd.sum, info.dims, &diags);
    if (!v) return std::nullopt;
    vectors.push_back(std::move(*v));
    info.labels.push_back(vd.label.value_or(std::to_string(k)));
    if (vd.eigenvalue) ++eig_count;
  }
  if (eig_count != 0 && eig_count != decl.vectors.size()) {
    diags.push_back({Diagnostic::Severity::Error,
                     "either all basis vectors carry 'eig' or none", decl.span});
    return std::nullopt;
  }
  info.has_eigenvalues = eig_count == decl.vectors.size();
  for (std::size_t a = 0; a < info.labels.size(); ++a) {
    for (std::size_t b = a + 1; b < info.labels.size(); ++b) {
      if (info.labels[a] == info.labels[b]) {
        diags.push_back({Diagnostic::Severity::Error,
                         "duplicate outcome label \"" + info.labels[a] + "\"", decl.span});
        return std::nullopt;
      }
    }
  }
  if (vectors.size() > dim) {
    diags.push_back({Diagnostic::Severity::Error, "basis has more vectors than its dimension",
                     decl.span});
    return std::nullopt;
  }
  if (vectors.size() < dim && !decl.partial) {
    diags.push_back({Diagnostic::Severity::Error,
                     "basis '" + decl.name + "' does not span its space; mark it 'partial'",
                     decl.span});
    return std::nullopt;
  }
  double gram_dev = 0.0;
  for (std::size_t a = 0; a < vectors.size(); ++a) {
    for (std::size_t b = a; b < vectors.size(); ++b) {
      complexd ip{0.0, 0.0};
      for (std::size_t x = 0; x < dim; ++x) ip += std::conj(vectors[a][x]) * vectors[b][x];
      const complexd want = (a == b) ? complexd{1.0, 0.0} : complexd{0.0, 0.0};
      gram_dev = std::max(gram_dev, std::abs(ip - want));
    }
  }
  if (gram_dev > 1e-10) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", gram_dev);
    diags.push_back({Diagnostic::Severity::Error,
                     "basis '" + decl.name + "' is not orthonormal (max Gram deviation " +
                         buf + ")",
                     decl.span});
    return std::nullopt;
  }
  info.partial = decl.partial || vectors.size() < dim;
  if (out_vectors) *out_vectors = std::move(vectors);
  return info;
}

enum class Life { Fresh, Premeasured, Decohered, Measured };

struct ValidatorRegister {
  std::size_t dimension = 2;
  Life life = Life::Fresh;
  bool state_covered = false;
  std::size_t last_touched = 0;   // statement index of the last step using it
  std::size_t decohere_count = 0;
};

struct ValidatorRecord {
  std::vector<std::string> involved;
  std::size_t created_at = 0;
  std::map<std::string, std::size_t> decohere_counts;
};

}  // namespace detail

// Static checks: declarations before use, dimension agreement, basis
// orthonormality (1e-10), unitarity of applied matrices, the register
// lifecycle, and assertion well-formedness. Never throws.
inline std::vector<Diagnostic> validate(const ProtocolAST& ast) {
  using detail::Life;
  std::vector<Diagnostic> diags;
  std::map<std::string, detail::ValidatorRegister> regs;
  std::map<std::string, std::size_t> reg_dims;
  std::map<std::string, const StateDecl*> states;
  std::map<std::string, detail::BasisInfo> bases;
  std::map<std::string, detail::ValidatorRecord> records;
  struct MeasInfo {
    std::vector<std::string> labels;
    bool has_eigenvalues = false;
  };
  std::map<std::string, MeasInfo> measurements;
  bool steps_started = false;

  auto err = [&](const SourceSpan& span, std::string msg) {
    diags.push_back({Diagnostic::Severity::Error, std::move(msg), span});
  };

  auto known_register = [&](const std::string& name, const SourceSpan& span) -> bool {
    if (regs.count(name)) return true;
    err(span, "unknown register '" + name + "'");
    return false;
  };

  auto known_basis = [&](const std::string& name,
                         const SourceSpan& span) -> const detail::BasisInfo* {
    auto it = bases.find(name);
    if (it == bases.end()) {
      err(span, "unknown basis '" + name + "'");
      return nullptr;
    }
    return &it->second;
  };

  auto shape_matches = [&](const detail::BasisInfo& info, const std::vector<std::string>& targets,
                           const SourceSpan& span, const char* what) -> bool {
    std::vector<std::size_t> dims;
    for (const auto& t : targets) {
      auto it = regs.find(t);
      if (it == regs.end()) return false;  // already reported
      dims.push_back(it->second.dimension);
    }
    if (dims != info.dims) {
      err(span, std::string("basis shape does not match the ") + what + " register list");
      return false;
    }
    return true;
  };

  for (std::size_t idx = 0; idx < ast.statements.size(); ++idx) {
    const auto& stmt = ast.statements[idx];

    if (const auto* decl = std::get_if<RegisterDecl>(&stmt)) {
      if (regs.count(decl->name)) {
        err(decl->span, "duplicate register '" + decl->name + "'");
        continue;
      }
      if (decl->dimension < 2) {
        err(decl->span, "register dimension must be at least 2");
        continue;
      }
      if (decl->dimension > 9) {
        err(decl->span, "register dimension above 9 is not supported by ket digit notation");
        continue;
      }
      regs[decl->name] = {decl->dimension, Life::Fresh, false, 0, 0};
      reg_dims[decl->name] = decl->dimension;
      continue;
    }

    if (const auto* decl = std::get_if<StateDecl>(&stmt)) {
      if (steps_started) {
        err(decl->span, "state declarations must precede protocol steps");
        continue;
      }
      if (states.count(decl->name)) {
        err(decl->span, "duplicate state '" + decl->name + "'");
        continue;
      }
      bool ok = true;
      std::vector<std::size_t> dims;
      for (const auto& r : decl->registers) {
        if (!known_register(r, decl->span)) {
          ok = false;
          break;
        }
        dims.push_back(regs[r].dimension);
      }
      if (!ok) continue;
      for (std::size_t a = 0; a < decl->registers.size(); ++a) {
        for (std::size_t b = a + 1; b < decl->registers.size(); ++b) {
          if (decl->registers[a] == decl->registers[b]) {
            err(decl->span, "register '" + decl->registers[a] + "' listed twice");
            ok = false;
          }
        }
      }
      if (!ok) continue;
      for (const auto& r : decl->registers) {
        if (regs[r].state_covered) {
          err(decl->span, "register '" + r + "' already carries a declared state");
          ok = false;
        }
      }
      if (!ok) continue;
      auto v = detail::compile_ketsum(decl->sum, dims, &diags);
      if (!v) continue;
      double n2 = 0.0;
      for (const auto& z : *v) n2 += std::norm(z);
      if (std::abs(std::sqrt(n2) - 1.0) > 1e-10) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.6g", std::abs(std::sqrt(n2) - 1.0));
        err(decl->span, "state '" + decl->name + "' is not normalized (|norm - 1| = " + buf + ")");
        continue;
      }
      for (const auto& r : decl->registers) regs[r].state_covered = true;
      states[decl->name] = decl;
      continue;
    }

    if (const auto* decl = std::get_if<BasisDecl>(&stmt)) {
      if (bases.count(decl->name)) {
        err(decl->span, "duplicate basis '" + decl->name + "'");
        continue;
      }
      auto info = detail::check_basis(*decl, reg_dims, diags, nullptr);
      if (info) bases[decl->name] = std::move(*info);
      continue;
    }

    steps_started = true;

    if (const auto* step = std::get_if<PremeasureStep>(&stmt)) {
      if (!known_register(step->system, step->span)) continue;
      const auto* basis = known_basis(step->basis, step->span);
      if (!basis) continue;
      if (basis->dims.size() != 1 || basis->dims[0] != regs[step->system].dimension) {
        err(step->span, "premeasure basis must span exactly the system register");
        continue;
      }
      if (basis->partial) {
        err(step->span, "premeasure basis must be complete");
        continue;
      }
      auto& sys = regs[step->system];
      if (sys.life == Life::Decohered) {
        err(step->span, "register '" + step->system +
                            "' was decohered; the lifecycle allows no further pre-measurement");
        continue;
      }
      if (sys.life == Life::Measured) {
        err(step->span, "register '" + step->system + "' was already measured");
        continue;
      }
      bool ok = true;
      for (const auto& anc : step->ancillas) {
        if (!known_register(anc, step->span)) {
          ok = false;
          continue;
        }
        auto& a = regs[anc];
        if (anc == step->system) {
          err(step->span, "ancilla cannot be the system register");
          ok = false;
        } else if (a.state_covered || a.life != Life::Fresh) {
          err(step->span, "ancilla '" + anc + "' must start fresh in its initial state");
          ok = false;
        } else if (a.dimension != regs[step->system].dimension) {
          err(step->span, "ancilla '" + anc + "' dimension does not match the basis size");
          ok = false;
        }
      }
      if (!ok) continue;
      if (step->record_name) {
        if (records.count(*step->record_name)) {
          err(step->span, "duplicate record name '" + *step->record_name + "'");
          continue;
        }
        detail::ValidatorRecord rec;
        rec.involved.push_back(step->system);
        rec.involved.insert(rec.involved.end(), step->ancillas.begin(), step->ancillas.end());
        rec.created_at = idx;
        for (const auto& r : rec.involved) rec.decohere_counts[r] = regs[r].decohere_count;
        records[*step->record_name] = std::move(rec);
      }
      sys.life = Life::Premeasured;
      sys.last_touched = idx;
      for (const auto& anc : step->ancillas) {
        regs[anc].life = Life::Premeasured;
        regs[anc].last_touched = idx;
      }
      continue;
    }

    if (const auto* step = std::get_if<DecohereStep>(&stmt)) {
      bool ok = true;
      for (const auto& r : step->registers) ok = known_register(r, step->span) && ok;
      if (!ok) continue;
      const auto* basis = known_basis(step->basis, step->span);
      if (!basis) continue;
      if (!shape_matches(*basis, step->registers, step->span, "decohere")) continue;
      if (basis->partial) {
        err(step->span, "decoherence pointer basis must be complete");
        continue;
      }
      if (step->strength < 0.0 || step->strength > 1.0) {
        err(step->span, "decoherence strength must lie in [0, 1]");
        continue;
      }
      for (const auto& r : step->registers) {
        auto& reg = regs[r];
        if (reg.life == Life::Measured) {
          err(step->span, "register '" + r + "' was already measured");
          ok = false;
        } else if (reg.life == Life::Decohered) {
          err(step->span, "register '" + r + "' is already decohered");
          ok = false;
        }
      }
      if (!ok) continue;
      for (const auto& r : step->registers) {
        regs[r].life = Life::Decohered;
        regs[r].last_touched = idx;
        ++regs[r].decohere_count;
      }
      continue;
    }

    if (const auto* step = std::get_if<UndoStep>(&stmt)) {
      auto it = records.find(step->record);
      if (it == records.end()) {
        err(step->span, "unknown record '" + step->record + "'");
        continue;
      }
      const auto& rec = it->second;
      bool ok = true;
      for (const auto& r : rec.involved) {
        if (regs[r].decohere_count != rec.decohere_counts.at(r)) {
          err(step->span, "irreversible decoherence precedes undo of record '" + step->record +
                              "' (register '" + r + "')");
          ok = false;
        } else if (regs[r].last_touched > rec.created_at) {
          err(step->span, "register '" + r +
                              "' was used after the pre-measurement; undo must come first");
          ok = false;
        }
      }
      if (!ok) continue;
      for (const auto& r : rec.involved) {
        regs[r].life = Life::Fresh;
        regs[r].last_touched = idx;
      }
      records.erase(it);
      continue;
    }

    if (const auto* step = std::get_if<MeasureStep>(&stmt)) {
      if (measurements.count(step->result_name)) {
        err(step->span, "duplicate measurement name '" + step->result_name + "'");
        continue;
      }
      bool ok = true;
      for (const auto& r : step->registers) ok = known_register(r, step->span) && ok;
      if (!ok) continue;
      const auto* basis = known_basis(step->basis, step->span);
      if (!basis) continue;
      if (!shape_matches(*basis, step->registers, step->span, "measured")) continue;
      for (const auto& r : step->registers) {
        if (regs[r].life == Life::Measured) {
          err(step->span, "register '" + r + "' was already measured");
          ok = false;
        }
      }
      if (!ok) continue;
      for (const auto& r : step->registers) {
        regs[r].life = Life::Measured;
        regs[r].last_touched = idx;
      }
      MeasInfo info;
      info.labels = basis->labels;
      if (basis->partial) info.labels.push_back(meas::kOutsideLabel);
      info.has_eigenvalues = basis->has_eigenvalues;
      measurements[step->result_name] = std::move(info);
      continue;
    }

    if (const auto* step = std::get_if<ApplyStep>(&stmt)) {
      bool ok = true;
      std::size_t dim = 1;
      for (const auto& r : step->registers) {
        if (!known_register(r, step->span)) {
          ok = false;
          continue;
        }
        dim *= regs[r].dimension;
        if (regs[r].life == Life::Measured) {
          err(step->span, "register '" + r + "' was already measured");
          ok = false;
        }
      }
      if (!ok) continue;
      switch (step->gate) {
        case ApplyStep::Gate::Hadamard:
        case ApplyStep::Gate::Phase:
          if (step->registers.size() != 1 || dim != 2) {
            err(step->span, "this gate acts on a single qubit register");
            continue;
          }
          break;
        case ApplyStep::Gate::Cnot:
          if (step->registers.size() != 2 || dim != 4) {
            err(step->span, "cnot acts on two qubit registers");
            continue;
          }
          break;
        case ApplyStep::Gate::Matrix: {
          const std::size_t n = step->matrix.size();
          bool square = n > 0;
          for (const auto& row : step->matrix) square = square && row.size() == n;
          if (!square) {
            err(step->span, "matrix literal must be square");
            continue;
          }
          if (n != dim) {
            err(step->span, "matrix dimension " + std::to_string(n) +
                                " does not match the target registers (dimension " +
                                std::to_string(dim) + ")");
            continue;
          }
          double dev = 0.0;
          for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = 0; b < n; ++b) {
              complexd ip{0.0, 0.0};
              for (std::size_t k = 0; k < n; ++k) {
                ip += std::conj(step->matrix[k][a]) * step->matrix[k][b];
              }
              dev = std::max(dev, std::abs(ip - (a == b ? complexd{1.0, 0.0} : complexd{0.0, 0.0})));
            }
          }
          if (dev > 1e-10) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.3g", dev);
            err(step->span, std::string("matrix is not unitary (max deviation ") + buf + ")");
            continue;
          }
          break;
        }
      }
      for (const auto& r : step->registers) regs[r].last_touched = idx;
      continue;
    }

    if (const auto* stmt_a = std::get_if<AssertStmt>(&stmt)) {
      if (stmt_a->tolerance <= 0.0) {
        err(stmt_a->span, "tolerance must be positive");
        continue;
      }
      switch (stmt_a->kind) {
        case AssertStmt::Kind::Prob:
          for (const auto& term : stmt_a->prob_terms) {
            auto it = measurements.find(term.measurement);
            if (it == measurements.end()) {
              err(stmt_a->span, "unknown measurement '" + term.measurement + "'");
              continue;
            }
            bool found = false;
            for (const auto& l : it->second.labels) found = found || l == term.outcome;
            if (!found) {
              err(stmt_a->span, "measurement '" + term.measurement + "' has no outcome \"" +
                                    term.outcome + "\"");
            }
          }
          break;
        case AssertStmt::Kind::Correlation:
          for (const auto& name : stmt_a->correlation_measurements) {
            auto it = measurements.find(name);
            if (it == measurements.end()) {
              err(stmt_a->span, "unknown measurement '" + name + "'");
            } else if (!it->second.has_eigenvalues) {
              err(stmt_a->span, "measurement '" + name +
                                    "' has no outcome eigenvalues; correlation needs 'eig'");
            }
          }
          break;
        case AssertStmt::Kind::Fidelity: {
          auto it = states.find(stmt_a->fidelity_state);
          if (it == states.end()) {
            err(stmt_a->span, "unknown state '" + stmt_a->fidelity_state + "'");
            break;
          }
          if (it->second->registers != stmt_a->fidelity_registers) {
            err(stmt_a->span, "fidelity registers must match the declared registers of state '" +
                                  stmt_a->fidelity_state + "'");
          }
          break;
        }
      }
      continue;
    }
  }
  return diags;
}

// ---------------------------------------------------------------------------
// Printer (canonical form; parse . print . parse = parse)

namespace detail {

inline std::string fmt_double(double x) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::string fmt_complex(complexd z) {
  if (z.imag() == 0.0) return fmt_double(z.real());
  if (z.real() == 0.0) return fmt_double(z.imag()) + "i";
  std::string out = "(" + fmt_double(z.real());
  out += z.imag() < 0.0 ? " - " : " + ";
  out += fmt_double(std::abs(z.imag())) + "i)";
  return out;
}

inline std::string fmt_ketsum(const KetSum& sum) {
  std::string out;
  for (std::size_t k = 0; k < sum.terms.size(); ++k) {
    const auto& t = sum.terms[k];
    complexd coef = t.coefficient;
    if (k == 0) {
      if (coef.imag() == 0.0 && coef.real() < 0.0) {
        out += "-";
        coef = -coef;
      }
    } else {
      if (coef.imag() == 0.0 && coef.real() < 0.0) {
        out += " - ";
        coef = -coef;
      } else {
        out += " + ";
      }
    }
    if (coef != complexd{1.0, 0.0}) out += fmt_complex(coef) + "*";
    out += "|" + t.digits + ">";
  }
  return out;
}

inline std::string fmt_list(const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out += ", ";
    out += names[i];
  }
  return out;
}

struct StatementPrinter {
  std::ostringstream& os;

  void operator()(const RegisterDecl& d) {
    os << "register " << d.name;
    if (d.dimension == 2) {
      os << " qubit";
    } else {
      os << " dim " << d.dimension;
    }
    os << ";\n";
  }
  void operator()(const StateDecl& d) {
    os << "state " << d.name << " = " << fmt_ketsum(d.sum) << " on " << fmt_list(d.registers)
       << ";\n";
  }
  void operator()(const BasisDecl& d) {
    os << "basis " << d.name << " on " << fmt_list(d.registers) << " = ";
    if (d.is_mub) {
      os << "mub(" << d.mub_index << ")";
    } else {
      if (d.partial) os << "partial ";
      os << "{ ";
      for (std::size_t k = 0; k < d.vectors.size(); ++k) {
        if (k) os << ", ";
        os << fmt_ketsum(d.vectors[k].sum);
        if (d.vectors[k].label) os << " label \"" << *d.vectors[k].label << "\"";
        if (d.vectors[k].eigenvalue) os << " eig " << fmt_double(*d.vectors[k].eigenvalue);
      }
      os << " }";
    }
    os << ";\n";
  }
  void operator()(const PremeasureStep& s) {
    os << "premeasure " << s.system << " in " << s.basis << " into " << fmt_list(s.ancillas);
    if (s.record_name) os << " as " << *s.record_name;
    os << ";\n";
  }
  void operator()(const DecohereStep& s) {
    os << "decohere " << fmt_list(s.registers) << " in " << s.basis << " strength "
       << fmt_double(s.strength) << ";\n";
  }
  void operator()(const UndoStep& s) { os << "undo " << s.record << ";\n"; }
  void operator()(const MeasureStep& s) {
    os << "measure " << s.result_name << " : " << fmt_list(s.registers) << " in " << s.basis
       << ";\n";
  }
  void operator()(const ApplyStep& s) {
    os << "apply ";
    switch (s.gate) {
      case ApplyStep::Gate::Hadamard:
        os << "hadamard";
        break;
      case ApplyStep::Gate::Cnot:
        os << "cnot";
        break;
      case ApplyStep::Gate::Phase:
        os << "phase(" << fmt_double(s.phase) << ")";
        break;
      case ApplyStep::Gate::Matrix: {
        os << "[";
        for (std::size_t r = 0; r < s.matrix.size(); ++r) {
          if (r) os << ", ";
          os << "[";
          for (std::size_t c = 0; c < s.matrix[r].size(); ++c) {
            if (c) os << ", ";
            os << fmt_complex(s.matrix[r][c]);
          }
          os << "]";
        }
        os << "]";
        break;
      }
    }
    os << " on " << fmt_list(s.registers) << ";\n";
  }
  void operator()(const AssertStmt& a) {
    os << "assert " << describe(a) << " == " << fmt_double(a.expected) << " tol "
       << fmt_double(a.tolerance) << ";\n";
  }

  static std::string describe(const AssertStmt& a) {
    std::string out;
    switch (a.kind) {
      case AssertStmt::Kind::Prob: {
        out = "prob(";
        for (std::size_t i = 0; i < a.prob_terms.size(); ++i) {
          if (i) out += ", ";
          out += a.prob_terms[i].measurement + " = \"" + a.prob_terms[i].outcome + "\"";
        }
        out += ")";
        break;
      }
      case AssertStmt::Kind::Correlation:
        out = "correlation(" + fmt_list(a.correlation_measurements) + ")";
        break;
      case AssertStmt::Kind::Fidelity:
        out = "fidelity(" + fmt_list(a.fidelity_registers) + " vs " + a.fidelity_state + ")";
        break;
    }
    return out;
  }
};

}  // namespace detail

inline std::string print(const ProtocolAST& ast) {
  std::ostringstream os;
  detail::StatementPrinter printer{os};
  for (const auto& stmt : ast.statements) std::visit(printer, stmt);
  return os.str();
}

// ---------------------------------------------------------------------------
// Execution

struct AssertionOutcome {
  std::string description;
  double expected = 0.0;
  double actual = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct ExecutionReport {
  std::vector<AssertionOutcome> assertions;
  bool all_passed = true;
  std::uint64_t seed = meas::kDefaultSeed;
};

namespace detail {

struct Branch {
  double probability = 1.0;
  std::variant<qcore::StateVector, qcore::DensityOperator> state;
  std::map<std::string, std::string> records;
  std::map<std::string, meas::PremeasurementRecord> premeasure_records;
};

}  // namespace detail

// Runs a validated protocol: evolves the full outcome ensemble (one branch
// per measurement-record combination) and evaluates each assertion in
// program order. Throws std::invalid_argument if validation reports errors.
inline ExecutionReport execute(const ProtocolAST& ast, std::uint64_t seed = meas::kDefaultSeed) {
  {
    const auto diags = validate(ast);
    if (has_errors(diags)) {
      throw std::invalid_argument("execute called on an invalid protocol: " +
                                  (diags.empty() ? std::string("?") : diags.front().message));
    }
  }

  ExecutionReport report;
  report.seed = seed;

  // symbol tables
  std::vector<qcore::Register> reg_order;
  std::map<std::string, std::size_t> reg_dims;
  std::map<std::string, const StateDecl*> states;
  struct CompiledBasis {
    qcore::Basis basis;
    bool has_eigenvalues;
    std::map<std::string, double> eigen_by_label;
  };
  std::map<std::string, CompiledBasis> bases;
  std::map<std::string, CompiledBasis*> measurement_basis;

  for (const auto& stmt : ast.statements) {
    if (const auto* decl = std::get_if<RegisterDecl>(&stmt)) {
      reg_order.push_back({decl->name, decl->dimension});
      reg_dims[decl->name] = decl->dimension;
    } else if (const auto* decl = std::get_if<StateDecl>(&stmt)) {
      states[decl->name] = decl;
    } else if (const auto* decl = std::get_if<BasisDecl>(&stmt)) {
      std::vector<Diagnostic> scratch;
      std::vector<std::vector<complexd>> vectors;
      auto info = detail::check_basis(*decl, reg_dims, scratch, &vectors);
      std::size_t dim = 1;
      for (std::size_t d : info->dims) dim *= d;
      std::vector<double> eigs;
      if (decl->is_mub) {
        eigs = {1.0, -1.0};
      } else if (info->has_eigenvalues) {
        for (const auto& v : decl->vectors) eigs.push_back(*v.eigenvalue);
      }
      CompiledBasis cb{qcore::Basis(dim, vectors, info->labels, eigs, info->partial),
                       info->has_eigenvalues,
                       {}};
      for (std::size_t k = 0; k < info->labels.size(); ++k) {
        if (!eigs.empty()) cb.eigen_by_label[info->labels[k]] = eigs[k];
      }
      bases.emplace(decl->name, std::move(cb));
    }
  }

  // initial state: declared states tensored together, every uncovered
  // register in |0>, reordered to declaration order
  std::optional<qcore::StateVector> init;
  std::vector<std::string> covered;
  for (const auto& stmt : ast.statements) {
    if (const auto* decl = std::get_if<StateDecl>(&stmt)) {
      std::vector<qcore::Register> sub_regs;
      std::vector<std::size_t> dims;
      for (const auto& r : decl->registers) {
        sub_regs.push_back({r, reg_dims.at(r)});
        dims.push_back(reg_dims.at(r));
        covered.push_back(r);
      }
      auto amps = detail::compile_ketsum(decl->sum, dims, nullptr);
      qcore::StateVector sub(sub_regs, std::move(*amps));
      init = init ? qcore::tensor(*init, sub) : std::move(sub);
    }
  }
  for (const auto& reg : reg_order) {
    if (std::find(covered.begin(), covered.end(), reg.label) == covered.end()) {
      auto zero = qcore::StateVector::zero_state({reg});
      init = init ? qcore::tensor(*init, zero) : std::move(zero);
    }
  }
  std::vector<std::string> order;
  for (const auto& reg : reg_order) order.push_back(reg.label);
  std::vector<detail::Branch> branches;
  branches.push_back({1.0, qcore::reorder_registers(*init, order), {}, {}});

  auto gate_of = [](const ApplyStep& step) {
    switch (step.gate) {
      case ApplyStep::Gate::Hadamard:
        return qcore::hadamard();
      case ApplyStep::Gate::Cnot:
        return qcore::cnot();
      case ApplyStep::Gate::Phase:
        return qcore::phase_gate(step.phase);
      case ApplyStep::Gate::Matrix: {
        const std::size_t n = step.matrix.size();
        std::vector<complexd> m;
        m.reserve(n * n);
        for (const auto& row : step.matrix) m.insert(m.end(), row.begin(), row.end());
        return qcore::Unitary(n, std::move(m));
      }
    }
    throw std::logic_error("unreachable");
  };

  using StateVar = std::variant<qcore::StateVector, qcore::DensityOperator>;

  for (const auto& stmt : ast.statements) {
    if (const auto* step = std::get_if<PremeasureStep>(&stmt)) {
      const auto& basis = bases.at(step->basis).basis;
      for (auto& branch : branches) {
        branch.state = std::visit(
            [&](auto& state) -> StateVar {
              auto [next, rec] = meas::premeasure(std::move(state), step->system, basis,
                                                  step->ancillas);
              if (step->record_name) {
                branch.premeasure_records.emplace(*step->record_name, rec);
              }
              return StateVar(std::move(next));
            },
            branch.state);
      }
    } else if (const auto* step = std::get_if<DecohereStep>(&stmt)) {
      const auto& basis = bases.at(step->basis).basis;
      for (auto& branch : branches) {
        branch.state = std::visit(
            [&](const auto& state) {
              return meas::decohere(state, step->registers, basis, step->strength);
            },
            branch.state);
      }
    } else if (const auto* step = std::get_if<UndoStep>(&stmt)) {
      for (auto& branch : branches) {
        const auto rec = branch.premeasure_records.at(step->record);
        branch.premeasure_records.erase(step->record);
        branch.state = std::visit(
            [&](auto& state) -> StateVar {
              return StateVar(meas::undo_premeasure(std::move(state), rec));
            },
            branch.state);
      }
    } else if (const auto* step = std::get_if<ApplyStep>(&stmt)) {
      const auto gate = gate_of(*step);
      for (auto& branch : branches) {
        branch.state = std::visit(
            [&](auto& state) -> StateVar {
              return StateVar(qcore::apply_unitary(std::move(state), gate, step->registers));
            },
            branch.state);
      }
    } else if (const auto* step = std::get_if<MeasureStep>(&stmt)) {
      auto& cb = bases.at(step->basis);
      measurement_basis[step->result_name] = &cb;
      std::vector<detail::Branch> next;
      for (auto& branch : branches) {
        const auto outcomes = std::visit(
            [&](const auto& state) {
              return meas::measure_channel(state, step->registers, cb.basis);
            },
            branch.state);
        for (const auto& o : outcomes) {
          const double p = branch.probability * o.probability;
          if (p < 1e-15) continue;
          auto records = branch.records;
          records[step->result_name] = o.label;
          next.push_back(detail::Branch{p, StateVar(o.post_state), std::move(records),
                                        branch.premeasure_records});
        }
      }
      branches = std::move(next);
    } else if (const auto* stmt_a = std::get_if<AssertStmt>(&stmt)) {
      AssertionOutcome outcome;
      outcome.description = detail::StatementPrinter::describe(*stmt_a);
      outcome.expected = stmt_a->expected;
      outcome.tolerance = stmt_a->tolerance;

      double actual = 0.0;
      bool well_defined = true;
      switch (stmt_a->kind) {
        case AssertStmt::Kind::Prob: {
          for (const auto& branch : branches) {
            bool match = true;
            for (const auto& term : stmt_a->prob_terms) {
              auto it = branch.records.find(term.measurement);
              match = match && it != branch.records.end() && it->second == term.outcome;
            }
            if (match) actual += branch.probability;
          }
          break;
        }
        case AssertStmt::Kind::Correlation: {
          double outside_mass = 0.0;
          for (const auto& branch : branches) {
            double prod = 1.0;
            bool valid = true;
            for (const auto& name : stmt_a->correlation_measurements) {
              const auto& label = branch.records.at(name);
              const auto& eigen = measurement_basis.at(name)->eigen_by_label;
              auto it = eigen.find(label);
              if (it == eigen.end()) {  // the "outside" residual bin
                valid = false;
                break;
              }
              prod *= it->second;
            }
            if (valid) {
              actual += prod * branch.probability;
            } else {
              outside_mass += branch.probability;
            }
          }
          if (outside_mass > stmt_a->tolerance) well_defined = false;
          break;
        }
        case AssertStmt::Kind::Fidelity: {
          const auto* decl = states.at(stmt_a->fidelity_state);
          std::vector<qcore::Register> target_regs;
          std::vector<std::size_t> dims;
          for (const auto& r : decl->registers) {
            target_regs.push_back({r, reg_dims.at(r)});
            dims.push_back(reg_dims.at(r));
          }
          auto amps = detail::compile_ketsum(decl->sum, dims, nullptr);
          const qcore::StateVector target(target_regs, std::move(*amps));
          for (const auto& branch : branches) {
            const auto reduced = std::visit(
                [&](const auto& state) -> qcore::DensityOperator {
                  using T = std::decay_t<decltype(state)>;
                  if constexpr (std::is_same_v<T, qcore::StateVector>) {
                    return qcore::reduced_density(state, stmt_a->fidelity_registers);
                  } else {
                    return qcore::partial_trace(state, stmt_a->fidelity_registers);
                  }
                },
                branch.state);
            actual += branch.probability * qcore::fidelity(target, reduced);
          }
          break;
        }
      }
      outcome.actual = actual;
      outcome.passed = well_defined && std::abs(actual - stmt_a->expected) <= stmt_a->tolerance;
      report.all_passed = report.all_passed && outcome.passed;
      report.assertions.push_back(std::move(outcome));
    }
  }
  return report;
}

}  // namespace wigner::protoparse
