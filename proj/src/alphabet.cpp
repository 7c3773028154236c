#include "serrm/alphabet.hpp"

#include <set>
#include <sstream>
#include <stdexcept>

namespace serrm {

namespace {

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = text.find(',', start);
    out.emplace_back(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

SymbolAlphabet::SymbolAlphabet(std::vector<std::string> usual, std::vector<std::string> special)
    : usual_(std::move(usual)), special_(std::move(special)) {
  std::set<std::string> seen;
  for (const auto* list : {&usual_, &special_}) {
    for (const auto& s : *list) {
      if (s.empty() || s.find_first_of(",;= \n") != std::string::npos) {
        throw std::invalid_argument("invalid symbol name '" + s + "'");
      }
      if (!seen.insert(s).second) throw std::invalid_argument("duplicate symbol '" + s + "'");
    }
  }
}

SymbolAlphabet SymbolAlphabet::digits(int count) {
  if (count < 1) throw std::invalid_argument("alphabet needs at least one usual symbol");
  std::vector<std::string> usual;
  usual.reserve(static_cast<std::size_t>(count));
  for (int v = 1; v <= count; ++v) usual.push_back(std::to_string(v));
  return SymbolAlphabet(std::move(usual), {std::string(kMaskSymbol)});
}

SymbolAlphabet SymbolAlphabet::parse(std::string_view text) {
  const std::size_t semi = text.find(';');
  if (semi == std::string_view::npos) return SymbolAlphabet(split_list(text), {});
  return SymbolAlphabet(split_list(text.substr(0, semi)), split_list(text.substr(semi + 1)));
}

const std::string& SymbolAlphabet::name(int index) const {
  if (index < 0 || index >= size()) throw std::out_of_range("symbol index " + std::to_string(index));
  return index < num_usual() ? usual_[static_cast<std::size_t>(index)]
                             : special_[static_cast<std::size_t>(index - num_usual())];
}

std::optional<int> SymbolAlphabet::find(std::string_view name) const {
  for (int i = 0; i < size(); ++i) {
    if (this->name(i) == name) return i;
  }
  return std::nullopt;
}

int SymbolAlphabet::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw std::invalid_argument("unknown symbol '" + std::string(name) + "'");
}

std::string SymbolAlphabet::to_string() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < usual_.size(); ++i) os << (i ? "," : "") << usual_[i];
  os << ';';
  for (std::size_t i = 0; i < special_.size(); ++i) os << (i ? "," : "") << special_[i];
  return os.str();
}

}  // namespace serrm
