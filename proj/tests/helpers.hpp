#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "tutoreval/corpus.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("tutoreval_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(TUTOREVAL_FIXTURES) / name;
}

/// n conversations with `per` responses each, every response labeled `label` on all dimensions.
inline tutoreval::corpus::Dataset make_dataset(std::size_t n, std::size_t per,
                                               tutoreval::Ternary label = tutoreval::Ternary::Yes) {
    tutoreval::corpus::Dataset d;
    for (std::size_t c = 0; c < n; ++c) {
        tutoreval::corpus::Conversation conv;
        conv.id = "c" + std::to_string(c);
        conv.history = {{tutoreval::corpus::Speaker::Tutor, "What is 2 + 3?"},
                        {tutoreval::corpus::Speaker::Student, "It is 6."}};
        for (std::size_t r = 0; r < per; ++r) {
            tutoreval::corpus::TutorResponse resp;
            resp.id = conv.id + "_r" + std::to_string(r);
            resp.tutor_id = "Tutor" + std::to_string(r);
            resp.text = "Check your addition again.";
            for (auto dim : tutoreval::kAllDimensions) resp.annotations[dim] = label;
            conv.responses.push_back(resp);
        }
        d.conversations.push_back(conv);
    }
    return d;
}

}  // namespace testing
