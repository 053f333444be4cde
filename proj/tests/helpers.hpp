#pragma once
// Shared test scaffolding: scratch directories, file helpers, and small
// domain object factories.

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "templar/core.hpp"
#include "templar/json_io.hpp"

namespace testutil {

// Scratch directory removed on destruction. Unique per instance so tests can
// run concurrently.
class TempDir {
public:
    TempDir() {
        static std::atomic<long> counter{0};
        const long n = counter.fetch_add(1);
        path_ = std::filesystem::temp_directory_path() /
                ("templar_test_" + std::to_string(::getpid()) + "_" + std::to_string(n));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Minimal valid template. The marker lands in the description so mock rules
// can key on it.
inline templar::ThoughtTemplate make_template(int n, const std::string& marker = "") {
    templar::ThoughtTemplate t;
    t.template_id = "TID_" + std::to_string(n);
    t.template_name = "Pattern " + std::to_string(n);
    t.description = marker.empty() ? "Lookup pattern number " + std::to_string(n)
                                   : "Lookup pattern number " + std::to_string(n) + " " + marker;
    t.reason_flow = {"Identify the entity", "Look up the attribute"};
    t.example.example_problem = "What is attribute of entity " + std::to_string(n) + "?";
    t.example.solution_steps = {"Find entity", "Read attribute"};
    t.example.final_answer = "attribute " + std::to_string(n);
    return t;
}

// Reasoning trace in the production step format, ending with the answer
// contract line.
inline std::string make_trace(const std::vector<int>& template_numbers,
                              const std::string& answer) {
    std::string trace;
    int step = 1;
    for (const int n : template_numbers) {
        trace += "Step " + std::to_string(step++) + " | TEMPLATE_TITLE: Pattern " +
                 std::to_string(n) + " TEMPLATE_ID: TID_" + std::to_string(n) +
                 " | TEMPLATE_CONTENT: applying the pattern\n";
    }
    trace += "Final Answer: [\"" + answer + "\"]";
    return trace;
}

}  // namespace testutil
