#pragma once

// Durable session storage on SQLite. A session row holds the mutable header
// (status, counters, cached recommendation); trajectory steps and the
// beliefs observed after each step are insert-only.

#include <mutex>
#include <string>
#include <vector>

#include <sqlite3.h>

#include <json.hpp>

#include "diagbed/error.hpp"

namespace diagbed {

struct StoredSession {
    std::string id;
    nlohmann::json header;
    std::vector<nlohmann::json> steps;
    std::vector<std::pair<std::size_t, double>> beliefs;  // (step index, prior after)
};

class SessionStore {
public:
    explicit SessionStore(const std::string& path = ":memory:") {
        if (sqlite3_open(path.c_str(), &db_) != SQLITE_OK) {
            const std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
            sqlite3_close(db_);
            throw Error(ErrorKind::InvalidArgument, "cannot open session store " + path + ": " + msg);
        }
        exec("PRAGMA journal_mode=WAL");
        exec("CREATE TABLE IF NOT EXISTS sessions (id TEXT PRIMARY KEY, header TEXT NOT NULL)");
        exec("CREATE TABLE IF NOT EXISTS steps (session_id TEXT NOT NULL, step_index INTEGER NOT NULL, "
             "body TEXT NOT NULL, PRIMARY KEY (session_id, step_index))");
        exec("CREATE TABLE IF NOT EXISTS beliefs (session_id TEXT NOT NULL, step_index INTEGER NOT NULL, "
             "prior_after REAL NOT NULL, PRIMARY KEY (session_id, step_index))");
    }

    SessionStore(const SessionStore&) = delete;
    SessionStore& operator=(const SessionStore&) = delete;
    ~SessionStore() { sqlite3_close(db_); }

    void put_header(const std::string& id, const nlohmann::json& header) {
        run("INSERT INTO sessions (id, header) VALUES (?1, ?2) ON CONFLICT(id) DO UPDATE SET header = excluded.header",
            {id, header.dump()});
    }

    void append_step(const std::string& id, std::size_t index, const nlohmann::json& step) {
        run("INSERT INTO steps (session_id, step_index, body) VALUES (?1, ?2, ?3)",
            {id, std::to_string(index), step.dump()});
    }

    void record_belief(const std::string& id, std::size_t index, double prior_after) {
        std::lock_guard lock(mutex_);
        Statement st(db_, "INSERT OR IGNORE INTO beliefs (session_id, step_index, prior_after) VALUES (?1, ?2, ?3)");
        sqlite3_bind_text(st.get(), 1, id.c_str(), -1, SQLITE_TRANSIENT);
        sqlite3_bind_int64(st.get(), 2, static_cast<sqlite3_int64>(index));
        sqlite3_bind_double(st.get(), 3, prior_after);
        st.done(db_);
    }

    std::vector<StoredSession> load_all() {
        std::lock_guard lock(mutex_);
        std::vector<StoredSession> out;
        {
            Statement st(db_, "SELECT id, header FROM sessions ORDER BY id");
            while (st.step(db_)) out.push_back({st.text(0), nlohmann::json::parse(st.text(1)), {}, {}});
        }
        for (auto& s : out) {
            Statement steps(db_, "SELECT body FROM steps WHERE session_id = ?1 ORDER BY step_index");
            sqlite3_bind_text(steps.get(), 1, s.id.c_str(), -1, SQLITE_TRANSIENT);
            while (steps.step(db_)) s.steps.push_back(nlohmann::json::parse(steps.text(0)));
            Statement beliefs(db_, "SELECT step_index, prior_after FROM beliefs WHERE session_id = ?1 ORDER BY step_index");
            sqlite3_bind_text(beliefs.get(), 1, s.id.c_str(), -1, SQLITE_TRANSIENT);
            while (beliefs.step(db_)) {
                s.beliefs.emplace_back(static_cast<std::size_t>(sqlite3_column_int64(beliefs.get(), 0)),
                                       sqlite3_column_double(beliefs.get(), 1));
            }
        }
        return out;
    }

private:
    class Statement {
    public:
        Statement(sqlite3* db, const char* sql) {
            if (sqlite3_prepare_v2(db, sql, -1, &st_, nullptr) != SQLITE_OK) fail(db);
        }
        ~Statement() { sqlite3_finalize(st_); }
        Statement(const Statement&) = delete;
        Statement& operator=(const Statement&) = delete;

        sqlite3_stmt* get() const { return st_; }

        bool step(sqlite3* db) {
            const int rc = sqlite3_step(st_);
            if (rc == SQLITE_ROW) return true;
            if (rc == SQLITE_DONE) return false;
            fail(db);
        }

        void done(sqlite3* db) {
            if (step(db)) throw Error(ErrorKind::InvalidArgument, "session store: unexpected row");
        }

        std::string text(int col) const {
            const auto* p = sqlite3_column_text(st_, col);
            return p ? reinterpret_cast<const char*>(p) : "";
        }

        [[noreturn]] static void fail(sqlite3* db) {
            const int rc = sqlite3_extended_errcode(db);
            const auto kind = (rc & 0xff) == SQLITE_CONSTRAINT ? ErrorKind::Conflict : ErrorKind::InvalidArgument;
            throw Error(kind, std::string("session store: ") + sqlite3_errmsg(db));
        }

    private:
        sqlite3_stmt* st_ = nullptr;
    };

    void exec(const char* sql) {
        char* err = nullptr;
        if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
            const std::string msg = err ? err : "unknown error";
            sqlite3_free(err);
            throw Error(ErrorKind::InvalidArgument, "session store: " + msg);
        }
    }

    void run(const char* sql, const std::vector<std::string>& params) {
        std::lock_guard lock(mutex_);
        Statement st(db_, sql);
        for (std::size_t i = 0; i < params.size(); ++i) {
            sqlite3_bind_text(st.get(), static_cast<int>(i + 1), params[i].c_str(), -1, SQLITE_TRANSIENT);
        }
        st.done(db_);
    }

    sqlite3* db_ = nullptr;
    std::mutex mutex_;
};

}  // namespace diagbed
