#pragma once

// Durable FIFO feeding the consolidation worker. Every mutation appends one
// JSON line to a journal before it takes effect in memory, so a crashed
// worker resumes exactly where it stopped (at-least-once delivery; the
// consolidation pass itself is idempotent and short-circuits finished ids).

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "core.hpp"

namespace magma {

class ConsolidationQueue {
 public:
  ConsolidationQueue() = default;  // in-memory only, for tests

  explicit ConsolidationQueue(std::filesystem::path journal_path) {
    open(std::move(journal_path));
  }

  // Replays an existing journal, then appends to it.
  void open(std::filesystem::path journal_path) {
    path_ = std::move(journal_path);
    if (std::filesystem::exists(path_)) replay();
    out_.open(path_, std::ios::app);
    if (!out_) throw StoreError("cannot open queue journal " + path_.string());
  }

  void enqueue(const std::string& id) {
    append("enq", id);
    pending_.push_back(id);
    ++enqueued_;
  }

  // Head of the queue without removing it; nullopt when empty.
  std::optional<std::string> peek() const {
    if (pending_.empty()) return std::nullopt;
    return pending_.front();
  }

  // Acknowledge the head after processing. Out-of-order acks are an error.
  void ack(const std::string& id) {
    if (pending_.empty() || pending_.front() != id)
      throw StoreError("queue ack out of order: " + id);
    append("deq", id);
    pending_.pop_front();
    ++dequeued_;
  }

  void mark_done(const std::string& id) {
    append("done", id);
    done_.insert(id);
  }

  void mark_failed(const std::string& id) {
    append("fail", id);
    ++failures_[id];
  }

  bool is_done(const std::string& id) const { return done_.count(id) > 0; }
  int failures(const std::string& id) const {
    auto it = failures_.find(id);
    return it == failures_.end() ? 0 : it->second;
  }

  size_t size() const { return pending_.size(); }
  std::uint64_t enqueued_total() const { return enqueued_; }
  std::uint64_t dequeued_total() const { return dequeued_; }

 private:
  void append(const char* op, const std::string& id) {
    if (path_.empty()) return;
    out_ << json{{"op", op}, {"id", id}}.dump() << '\n';
    out_.flush();
    if (!out_) throw StoreError("queue journal write failed: " + path_.string());
  }

  void replay() {
    std::ifstream f(path_);
    if (!f) throw StoreError("cannot read queue journal " + path_.string());
    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded())
        throw StoreError(path_.string() + ":" + std::to_string(line_no) +
                         ": malformed journal record");
      const std::string op = j.value("op", std::string{});
      const std::string id = j.value("id", std::string{});
      if (op == "enq") {
        pending_.push_back(id);
        ++enqueued_;
      } else if (op == "deq") {
        if (!pending_.empty() && pending_.front() == id) pending_.pop_front();
        ++dequeued_;
      } else if (op == "done") {
        done_.insert(id);
      } else if (op == "fail") {
        ++failures_[id];
      }
    }
  }

  std::filesystem::path path_;
  std::ofstream out_;
  std::deque<std::string> pending_;
  std::unordered_set<std::string> done_;
  std::unordered_map<std::string, int> failures_;
  std::uint64_t enqueued_ = 0;
  std::uint64_t dequeued_ = 0;
};

}  // namespace magma
