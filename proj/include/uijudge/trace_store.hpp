#pragma once
#include "uijudge/decomposer.hpp"
#include "uijudge/digest.hpp"
#include "uijudge/gateway.hpp"
#include "uijudge/ssr.hpp"

#include <nlohmann/json.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

// On-disk layout for one evaluation run:
//   <root>/tasks/       task list files
//   <root>/graphs/      decomposed substate graphs (canonical form)
//   <root>/traces/<id>/ manifest.json + screenshot files
//   <root>/captions/    caption cache, content-addressed
//   <root>/judgements/  per-task judgement reports
//   <root>/reports/     metric reports
//   <root>/transcripts/ per-task model-call logs
//   <root>/locks/       single-writer locks per task id

namespace uijudge {

class ManifestError : public Error {
public:
    explicit ManifestError(const std::string& what) : Error("manifest error: " + what) {}
};

class DigestMismatch : public Error {
public:
    explicit DigestMismatch(const std::string& what) : Error("digest mismatch: " + what) {}
};

class EmptyFileError : public Error {
public:
    explicit EmptyFileError(const std::string& what) : Error("empty file: " + what) {}
};

class StoreError : public Error {
public:
    explicit StoreError(const std::string& what) : Error("store error: " + what) {}
};

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StoreError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Atomic-ish write: temp file in the same directory, then rename.
inline void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
    std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw StoreError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw StoreError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string slugify(std::string_view text) {
    std::string out;
    bool pending_dash = false;
    for (char c : text) {
        const unsigned char uc = static_cast<unsigned char>(c);
        if (std::isalnum(uc)) {
            if (pending_dash && !out.empty()) out.push_back('-');
            pending_dash = false;
            out.push_back(static_cast<char>(std::tolower(uc)));
        } else {
            pending_dash = true;
        }
    }
    return out.empty() ? "task" : out;
}

class EvalStore {
public:
    explicit EvalStore(std::filesystem::path root) : root_(std::move(root)) {
        namespace fs = std::filesystem;
        for (const char* dir :
             {"tasks", "graphs", "traces", "captions", "judgements", "reports", "transcripts",
              "locks"})
            fs::create_directories(root_ / dir);
    }

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path tasks_dir() const { return root_ / "tasks"; }
    std::filesystem::path graphs_dir() const { return root_ / "graphs"; }
    std::filesystem::path traces_dir() const { return root_ / "traces"; }
    std::filesystem::path captions_dir() const { return root_ / "captions"; }
    std::filesystem::path judgements_dir() const { return root_ / "judgements"; }
    std::filesystem::path reports_dir() const { return root_ / "reports"; }
    std::filesystem::path transcripts_dir() const { return root_ / "transcripts"; }
    std::filesystem::path locks_dir() const { return root_ / "locks"; }

    std::filesystem::path graph_path(const std::string& task_id) const {
        return graphs_dir() / (task_id + ".json");
    }
    std::filesystem::path trace_dir(const std::string& task_id) const {
        return traces_dir() / task_id;
    }
    std::filesystem::path judgement_path(const std::string& task_id) const {
        return judgements_dir() / (task_id + ".json");
    }
    std::filesystem::path report_path(const std::string& family) const {
        return reports_dir() / (family + ".json");
    }
    std::filesystem::path transcript_path(const std::string& task_id) const {
        return transcripts_dir() / (task_id + ".jsonl");
    }

private:
    std::filesystem::path root_;
};

// Cross-process single-writer guard: exclusive-create of a lock file.
class TaskLock {
public:
    TaskLock(const EvalStore& store, const std::string& task_id)
        : path_(store.locks_dir() / (task_id + ".lock")) {
        const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) {
            if (errno == EEXIST)
                throw StoreError("task " + task_id + " is locked by another writer (" +
                                 path_.string() + ")");
            throw StoreError("cannot create lock file " + path_.string());
        }
        ::close(fd);
    }

    ~TaskLock() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }

    TaskLock(const TaskLock&) = delete;
    TaskLock& operator=(const TaskLock&) = delete;

private:
    std::filesystem::path path_;
};

inline void store_graph(const EvalStore& store, const SubstateGraph& graph) {
    write_file_bytes(store.graph_path(graph.task_id), to_canonical(graph));
}

inline SubstateGraph load_graph(const EvalStore& store, const std::string& task_id) {
    return from_canonical(read_file_bytes(store.graph_path(task_id)));
}

inline void store_task_spec(const EvalStore& store, const TaskSpec& task) {
    nlohmann::json doc;
    doc["task_id"] = task.task_id;
    doc["description"] = task.description;
    doc["app_name"] = task.app_name ? nlohmann::json(*task.app_name) : nlohmann::json();
    doc["additional_info"] =
        task.additional_info ? nlohmann::json(*task.additional_info) : nlohmann::json();
    write_file_bytes(store.tasks_dir() / (task.task_id + ".json"), doc.dump(2) + "\n");
}

inline TaskSpec load_task_spec(const EvalStore& store, const std::string& task_id) {
    const auto path = store.tasks_dir() / (task_id + ".json");
    nlohmann::json doc = nlohmann::json::parse(read_file_bytes(path), nullptr, false);
    if (doc.is_discarded()) throw StoreError("task spec is not valid JSON: " + path.string());
    TaskSpec task;
    task.task_id = doc.value("task_id", task_id);
    task.description = doc.value("description", "");
    if (doc.contains("app_name") && !doc["app_name"].is_null())
        task.app_name = doc["app_name"].get<std::string>();
    if (doc.contains("additional_info") && !doc["additional_info"].is_null())
        task.additional_info = doc["additional_info"].get<std::string>();
    return task;
}

// ---------------------------------------------------------------------------
// Task lists

// One task per line, optionally "app<TAB>description". Blank lines are
// skipped but keep their line number, so task ids stay stable when a list
// is edited with spacing.
inline std::vector<TaskSpec> ingest_task_list(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw StoreError("cannot read task list " + file.string());

    std::vector<TaskSpec> tasks;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim_copy(line).empty()) continue;

        TaskSpec task;
        const auto tab = line.find('\t');
        if (tab != std::string::npos) {
            task.app_name = trim_copy(line.substr(0, tab));
            task.description = trim_copy(line.substr(tab + 1));
        } else {
            task.description = trim_copy(line);
        }
        if (task.description.empty()) continue;

        char num[16];
        std::snprintf(num, sizeof num, "%03d", line_no);
        task.task_id = slugify(task.app_name.value_or("task")) + "-" + num;
        tasks.push_back(std::move(task));
    }
    if (tasks.empty()) throw EmptyFileError("no tasks in " + file.string());
    return tasks;
}

struct BenchmarkIndex {
    std::map<std::string, std::vector<std::string>> tasks_by_app;
    std::map<std::string, int> totals;
    int total = 0;
};

inline BenchmarkIndex build_benchmark_index(const std::vector<TaskSpec>& tasks) {
    BenchmarkIndex index;
    for (const auto& task : tasks) {
        const std::string app = task.app_name.value_or("(unassigned)");
        index.tasks_by_app[app].push_back(task.task_id);
        ++index.totals[app];
        ++index.total;
    }
    return index;
}

// ---------------------------------------------------------------------------
// Trace manifests

struct ScreenshotRef {
    std::string path;   // relative to the trace directory
    std::string digest; // sha-256 of the file bytes
};

struct TraceManifest {
    std::string task_id;
    std::string provenance; // "human" or "agent:<name>"
    std::vector<ScreenshotRef> screenshots;
    std::map<std::string, std::string> captions; // digest -> cached caption
    std::filesystem::path base_dir;

    std::filesystem::path screenshot_path(std::size_t i) const {
        return base_dir / screenshots.at(i).path;
    }
};

inline bool valid_provenance(const std::string& p) {
    return p == "human" || (p.rfind("agent:", 0) == 0 && p.size() > 6);
}

inline void store_trace_manifest(const TraceManifest& manifest) {
    if (!valid_provenance(manifest.provenance))
        throw ManifestError("provenance must be `human` or `agent:<name>`, got `" +
                            manifest.provenance + "`");
    nlohmann::json shots = nlohmann::json::array();
    for (const auto& s : manifest.screenshots)
        shots.push_back({{"digest", s.digest}, {"path", s.path}});
    nlohmann::json doc;
    doc["task_id"] = manifest.task_id;
    doc["provenance"] = manifest.provenance;
    doc["screenshots"] = std::move(shots);
    if (!manifest.captions.empty()) doc["captions"] = manifest.captions;
    write_file_bytes(manifest.base_dir / "manifest.json", doc.dump(2) + "\n");
}

// Builds a manifest for every screenshot file already present in `dir`,
// ordered by filename, digesting each.
inline TraceManifest record_trace_dir(const std::string& task_id,
                                      const std::filesystem::path& dir,
                                      const std::string& provenance) {
    TraceManifest manifest;
    manifest.task_id = task_id;
    manifest.provenance = provenance;
    manifest.base_dir = dir;
    std::vector<std::string> names;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name == "manifest.json" || name.ends_with(".tmp")) continue;
        names.push_back(name);
    }
    std::sort(names.begin(), names.end());
    for (const auto& name : names)
        manifest.screenshots.push_back({name, sha256_hex(read_file_bytes(dir / name))});
    return manifest;
}

// Loads and verifies a recorded trace: every referenced screenshot must
// exist and hash to the digest pinned in the manifest.
inline TraceManifest load_trace(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    if (!std::filesystem::exists(manifest_path))
        throw ManifestError("no manifest.json in " + dir.string());

    nlohmann::json doc = nlohmann::json::parse(read_file_bytes(manifest_path), nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw ManifestError("manifest is not valid JSON: " + manifest_path.string());

    TraceManifest manifest;
    manifest.base_dir = dir;
    manifest.task_id = doc.value("task_id", "");
    manifest.provenance = doc.value("provenance", "");
    if (manifest.task_id.empty()) throw ManifestError("manifest missing task_id");
    if (!valid_provenance(manifest.provenance))
        throw ManifestError("manifest provenance must be `human` or `agent:<name>`");

    if (!doc.contains("screenshots") || !doc["screenshots"].is_array())
        throw ManifestError("manifest missing screenshots array");
    for (const auto& j : doc["screenshots"]) {
        ScreenshotRef ref{j.value("path", ""), j.value("digest", "")};
        if (ref.path.empty() || ref.digest.empty())
            throw ManifestError("screenshot entries need path and digest");
        const auto file = dir / ref.path;
        if (!std::filesystem::exists(file))
            throw ManifestError("screenshot " + ref.path + " named in manifest is missing");
        const std::string actual = sha256_hex(read_file_bytes(file));
        if (actual != ref.digest)
            throw DigestMismatch(ref.path + ": manifest pins " + ref.digest + " but file is " +
                                 actual);
        manifest.screenshots.push_back(std::move(ref));
    }
    if (doc.contains("captions"))
        for (const auto& [digest, caption] : doc["captions"].items())
            manifest.captions[digest] = caption.get<std::string>();
    return manifest;
}

// ---------------------------------------------------------------------------
// Caption cache on disk

class DiskCaptionCache final : public CaptionCache {
public:
    explicit DiskCaptionCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    std::optional<std::string> get(const std::string& model, const std::string& digest) override {
        const auto path = entry_path(model, digest);
        if (!std::filesystem::exists(path)) return std::nullopt;
        return read_file_bytes(path);
    }

    void put(const std::string& model, const std::string& digest,
             const std::string& caption) override {
        write_file_bytes(entry_path(model, digest), caption);
    }

private:
    std::filesystem::path entry_path(const std::string& model, const std::string& digest) const {
        return dir_ / slugify(model) / (digest + ".txt");
    }
    std::filesystem::path dir_;
};

} // namespace uijudge
