#include "tutoreval/labels.hpp"

#include "tutoreval/errors.hpp"

namespace tutoreval {

std::string_view to_string(Ternary label) {
    switch (label) {
        case Ternary::No: return "No";
        case Ternary::ToSomeExtent: return "To some extent";
        case Ternary::Yes: return "Yes";
    }
    return "?";
}

std::optional<Ternary> parse_ternary(std::string_view text) {
    for (Ternary t : kAllTernary) {
        if (to_string(t) == text) return t;
    }
    return std::nullopt;
}

Ternary parse_ternary_or_throw(std::string_view text) {
    if (auto t = parse_ternary(text)) return *t;
    throw ValidationError("unknown label \"" + std::string(text) +
                          "\" (expected \"Yes\", \"No\" or \"To some extent\")");
}

std::string_view dimension_key(Dimension dim) {
    switch (dim) {
        case Dimension::MistakeIdentification: return "mistake_identification";
        case Dimension::MistakeLocation: return "mistake_location";
        case Dimension::ProvidingGuidance: return "providing_guidance";
        case Dimension::Actionability: return "actionability";
    }
    return "?";
}

std::string_view dimension_title(Dimension dim) {
    switch (dim) {
        case Dimension::MistakeIdentification: return "Mistake Identification";
        case Dimension::MistakeLocation: return "Mistake Location";
        case Dimension::ProvidingGuidance: return "Providing Guidance";
        case Dimension::Actionability: return "Actionability";
    }
    return "?";
}

std::optional<Dimension> parse_dimension(std::string_view key) {
    for (Dimension d : kAllDimensions) {
        if (dimension_key(d) == key) return d;
    }
    return std::nullopt;
}

std::optional<Dimension> dimension_for_track(int track) {
    if (track >= 1 && track <= 4) return kAllDimensions[static_cast<std::size_t>(track - 1)];
    return std::nullopt;
}

int track_for_dimension(Dimension dim) { return static_cast<int>(dim) + 1; }

}  // namespace tutoreval
