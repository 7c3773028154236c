#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace serrm {

inline constexpr std::string_view kMaskSymbol = "MASK";

// Ordered symbol set: usual symbols first, then special symbols. A symbol's
// index in this order is its slot on the symbol axis.
class SymbolAlphabet {
 public:
  SymbolAlphabet() = default;
  SymbolAlphabet(std::vector<std::string> usual, std::vector<std::string> special);

  // "1".."count" followed by MASK; the alphabet of every dataset file.
  static SymbolAlphabet digits(int count);
  // Inverse of to_string(): "1,2,3;MASK".
  static SymbolAlphabet parse(std::string_view text);

  int size() const { return static_cast<int>(usual_.size() + special_.size()); }
  int num_usual() const { return static_cast<int>(usual_.size()); }
  int num_special() const { return static_cast<int>(special_.size()); }
  const std::vector<std::string>& usual() const { return usual_; }
  const std::vector<std::string>& special() const { return special_; }

  bool is_usual(int index) const { return index >= 0 && index < num_usual(); }
  const std::string& name(int index) const;
  std::optional<int> find(std::string_view name) const;
  int index_of(std::string_view name) const;
  std::optional<int> mask_index() const { return find(kMaskSymbol); }

  std::string to_string() const;
  bool operator==(const SymbolAlphabet&) const = default;

 private:
  std::vector<std::string> usual_;
  std::vector<std::string> special_;
};

}  // namespace serrm
