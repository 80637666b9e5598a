#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace tutoreval {

/// Three-way annotation. Enumerator order is the threshold order No < ToSomeExtent < Yes.
enum class Ternary { No = 0, ToSomeExtent = 1, Yes = 2 };

inline constexpr std::array<Ternary, 3> kAllTernary = {Ternary::No, Ternary::ToSomeExtent,
                                                       Ternary::Yes};

/// "Yes", "No" or "To some extent".
std::string_view to_string(Ternary label);
std::optional<Ternary> parse_ternary(std::string_view text);
/// Throws ValidationError naming the offending string.
Ternary parse_ternary_or_throw(std::string_view text);

/// The four pedagogical dimensions, one per track 1-4.
enum class Dimension { MistakeIdentification, MistakeLocation, ProvidingGuidance, Actionability };

inline constexpr std::array<Dimension, 4> kAllDimensions = {
    Dimension::MistakeIdentification, Dimension::MistakeLocation, Dimension::ProvidingGuidance,
    Dimension::Actionability};

/// JSON key, e.g. "mistake_identification".
std::string_view dimension_key(Dimension dim);
/// Human-readable name, e.g. "Mistake Identification".
std::string_view dimension_title(Dimension dim);
std::optional<Dimension> parse_dimension(std::string_view key);

/// Track 1-4 map to dimensions; track 5 (tutor identity) has none.
std::optional<Dimension> dimension_for_track(int track);
int track_for_dimension(Dimension dim);

}  // namespace tutoreval
