#include "tlvd/evidence.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <thread>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "tlvd/errors.hpp"
#include "tlvd/text.hpp"

namespace tlvd::evidence {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string excerpt(const std::string& payload) {
    auto s = payload.substr(0, 160);
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string strip_tags(const std::string& html) {
    std::string out;
    bool in_tag = false;
    for (char c : html) {
        if (c == '<')
            in_tag = true;
        else if (c == '>' && in_tag)
            in_tag = false;
        else if (!in_tag)
            out.push_back(c);
    }
    return out;
}

std::vector<std::string> unique_tokens(const std::string& s) {
    std::vector<std::string> out;
    for (auto& t : text::content_tokens(s))
        if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(std::move(t));
    return out;
}

}  // namespace

void SourceConfig::validate() const {
    if (top_k == 0) throw ConfigError("top_k must be at least 1");
    if (snippet_window == 0) throw ConfigError("snippet window must be at least 1 token");
    if (!(support_threshold >= 0.0 && support_threshold <= 1.0)) throw ConfigError("support threshold must lie in [0,1]");
    for (auto s : {Source::Arxiv, Source::Wikipedia, Source::Local})
        if (settings(s).enabled && !(settings(s).rate_limit > 0.0))
            throw ConfigError("rate limit for " + to_string(s) + " must be positive");
}

const SourceSettings& SourceConfig::settings(Source s) const {
    switch (s) {
        case Source::Arxiv: return arxiv;
        case Source::Wikipedia: return wikipedia;
        case Source::Local: return local;
    }
    return local;
}

SourceSettings& SourceConfig::settings(Source s) {
    return const_cast<SourceSettings&>(static_cast<const SourceConfig&>(*this).settings(s));
}

double SteadyClock::now() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

void SteadyClock::sleep_until(double t) {
    const double dt = t - now();
    if (dt > 0) std::this_thread::sleep_for(std::chrono::duration<double>(dt));
}

RateLimiter::RateLimiter(double per_second, Clock& clock) : clock_(clock) {
    if (!(per_second > 0.0) || !std::isfinite(per_second)) throw ConfigError("rate limit must be positive and finite");
    capacity_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(per_second)));
    window_ = std::max(1.0, static_cast<double>(capacity_) / per_second);
}

double RateLimiter::acquire() {
    std::lock_guard lock(mutex_);
    double now = clock_.now();
    auto expire = [&] {
        while (!stamps_.empty() && stamps_.front() + window_ <= now) stamps_.pop_front();
    };
    expire();
    if (stamps_.size() >= capacity_) {
        clock_.sleep_until(stamps_.front() + window_);
        now = std::max(clock_.now(), stamps_.front() + window_);
        expire();
    }
    stamps_.push_back(now);
    return now;
}

HttpTransport::HttpTransport(std::chrono::milliseconds timeout) : timeout_(timeout) {}

std::string HttpTransport::get(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw RetrievalError("not an absolute URL: " + url);
    const auto slash = url.find('/', scheme + 3);
    const std::string host = slash == std::string::npos ? url : url.substr(0, slash);
    const std::string path = slash == std::string::npos ? "/" : url.substr(slash);
    httplib::Client client(host);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    client.set_connection_timeout(secs.count(), 0);
    client.set_read_timeout(secs.count(), 0);
    client.set_follow_location(true);
    auto res = client.Get(path);
    if (!res) throw RetrievalError("GET " + url + " failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
        throw RetrievalError("GET " + url + " returned HTTP " + std::to_string(res->status));
    return res->body;
}

FixtureTransport::FixtureTransport(const std::string& dir) {
    if (dir.empty()) return;
    if (!fs::is_directory(dir)) throw ConfigError("fixture directory " + dir + " does not exist");
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".request") continue;
        auto payload = entry.path();
        payload.replace_extension(".payload");
        if (!fs::exists(payload)) throw ConfigError("fixture " + entry.path().string() + " has no payload");
        payloads_[text::trim(read_file(entry.path()))] = read_file(payload);
    }
}

std::string FixtureTransport::get(const std::string& url) {
    auto it = payloads_.find(url);
    if (it == payloads_.end()) throw RetrievalError("no recorded response for " + url);
    return it->second;
}

RecordingTransport::RecordingTransport(Transport& inner, std::string dir) : inner_(inner), dir_(std::move(dir)) {
    fs::create_directories(dir_);
}

std::string RecordingTransport::get(const std::string& url) {
    auto body = inner_.get(url);
    std::lock_guard lock(mutex_);
    const auto stem = fs::path(dir_) / text::hex64(text::fnv1a64(url));
    std::ofstream(stem.string() + ".request", std::ios::binary) << url << "\n";
    std::ofstream(stem.string() + ".payload", std::ios::binary) << body;
    return body;
}

std::string arxiv_url(const std::string& endpoint, const std::string& query, std::size_t k) {
    const auto toks = unique_tokens(query);
    std::string ti, abs;
    for (const auto& t : toks) {
        ti += (ti.empty() ? "ti:" : " AND ti:") + t;
        abs += (abs.empty() ? "abs:" : " AND abs:") + t;
    }
    const std::string q = toks.empty() ? "all:" + text::trim(query) : "(" + ti + ") OR (" + abs + ")";
    return endpoint + "?search_query=" + text::url_encode(q) + "&start=0&max_results=" + std::to_string(k);
}

std::string wikipedia_url(const std::string& endpoint, const std::string& query, std::size_t k) {
    return endpoint + "?q=" + text::url_encode(query) + "&limit=" + std::to_string(k);
}

std::vector<Document> parse_arxiv_atom(const std::string& payload, std::size_t k) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        std::istringstream in(payload);
        pt::read_xml(in, tree);
    } catch (const pt::xml_parser_error& e) {
        throw ParseError("malformed arXiv Atom payload (" + std::string(e.what()) + "): " + excerpt(payload));
    }
    const auto feed = tree.get_child_optional("feed");
    if (!feed) throw ParseError("arXiv payload has no <feed> element: " + excerpt(payload));
    std::vector<Document> out;
    for (const auto& [key, entry] : *feed) {
        if (key != "entry") continue;
        if (out.size() == k) break;
        Document d;
        d.source = Source::Arxiv;
        d.doc_id = entry.get<std::string>("id", "");
        d.title = entry.get<std::string>("title", "");
        d.snippet = entry.get<std::string>("summary", "");
        if (d.doc_id.empty()) throw ParseError("arXiv entry without <id>: " + excerpt(payload));
        d.url = d.doc_id;
        for (const auto& [lk, link] : entry)
            if (lk == "link" && link.get<std::string>("<xmlattr>.rel", "") == "alternate")
                d.url = link.get<std::string>("<xmlattr>.href");
        d.retrieval_score = 1.0 / static_cast<double>(out.size() + 1);
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<Document> parse_wikipedia_search(const std::string& payload, std::size_t k) {
    json doc;
    try {
        doc = json::parse(payload);
    } catch (const json::exception& e) {
        throw ParseError("malformed Wikipedia payload: " + excerpt(payload));
    }
    if (!doc.is_object() || !doc.contains("pages") || !doc.at("pages").is_array())
        throw ParseError("Wikipedia payload has no pages array: " + excerpt(payload));
    std::vector<Document> out;
    try {
        for (const auto& page : doc.at("pages")) {
            if (out.size() == k) break;
            Document d;
            d.source = Source::Wikipedia;
            const auto& id = page.at("id");
            d.doc_id = id.is_string() ? id.get<std::string>() : std::to_string(id.get<long long>());
            d.title = page.at("title").get<std::string>();
            if (page.contains("excerpt") && page.at("excerpt").is_string())
                d.snippet = strip_tags(page.at("excerpt").get<std::string>());
            if (page.contains("key") && page.at("key").is_string())
                d.url = "https://en.wikipedia.org/wiki/" + page.at("key").get<std::string>();
            d.retrieval_score = 1.0 / static_cast<double>(out.size() + 1);
            out.push_back(std::move(d));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("unexpected Wikipedia page shape (") + e.what() + "): " + excerpt(payload));
    }
    return out;
}

ArxivSearcher::ArxivSearcher(Transport& transport, std::string endpoint, RateLimiter* limiter)
    : transport_(transport), endpoint_(std::move(endpoint)), limiter_(limiter) {}

std::vector<Document> ArxivSearcher::search(const std::string& query, std::size_t k) {
    if (limiter_) limiter_->acquire();
    return parse_arxiv_atom(transport_.get(arxiv_url(endpoint_, query, k)), k);
}

WikipediaSearcher::WikipediaSearcher(Transport& transport, std::string endpoint, RateLimiter* limiter)
    : transport_(transport), endpoint_(std::move(endpoint)), limiter_(limiter) {}

std::vector<Document> WikipediaSearcher::search(const std::string& query, std::size_t k) {
    if (limiter_) limiter_->acquire();
    return parse_wikipedia_search(transport_.get(wikipedia_url(endpoint_, query, k)), k);
}

LocalSearcher::LocalSearcher(std::vector<LocalDocument> docs) : docs_(std::move(docs)) {
    std::set<std::pair<Source, std::string>> seen;
    for (const auto& d : docs_)
        if (!seen.insert({d.origin, d.doc_id}).second) throw ConfigError("duplicate local document id " + d.doc_id);
}

LocalSearcher LocalSearcher::load(const std::string& dir) {
    if (!fs::is_directory(dir)) throw ConfigError("corpus directory " + dir + " does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<LocalDocument> docs;
    for (const auto& f : files) {
        json j;
        try {
            j = json::parse(read_file(f));
            auto add = [&](const json& o) {
                docs.push_back({o.at("doc_id").get<std::string>(), o.at("title").get<std::string>(),
                                o.at("text").get<std::string>(), parse_source(o.value("origin", std::string("local")))});
            };
            if (j.is_array())
                for (const auto& o : j) add(o);
            else
                add(j);
        } catch (const json::exception& e) {
            throw ParseError("corpus file " + f.string() + ": " + e.what());
        }
    }
    return LocalSearcher(std::move(docs));
}

std::vector<Document> LocalSearcher::search(const std::string& query, std::size_t k) {
    const auto q = unique_tokens(query);
    std::vector<Document> out;
    if (q.empty()) return out;
    for (const auto& d : docs_) {
        const auto toks = text::content_tokens(d.title + " " + d.text);
        const std::set<std::string> have(toks.begin(), toks.end());
        std::size_t hits = 0;
        for (const auto& t : q) hits += have.count(t);
        if (hits == 0) continue;
        out.push_back({d.origin, d.doc_id, d.title, d.text, std::nullopt,
                       static_cast<double>(hits) / static_cast<double>(q.size())});
    }
    std::stable_sort(out.begin(), out.end(), [](const Document& a, const Document& b) {
        if (a.retrieval_score != b.retrieval_score) return a.retrieval_score > b.retrieval_score;
        return a.doc_id < b.doc_id;
    });
    if (out.size() > k) out.resize(k);
    return out;
}

std::vector<Document> search(Searcher& searcher, const std::string& query, const SourceConfig& config) {
    if (!config.settings(searcher.source()).enabled)
        throw ConfigError("evidence source " + to_string(searcher.source()) + " is disabled");
    auto docs = searcher.search(query, config.top_k);
    std::stable_sort(docs.begin(), docs.end(),
                     [](const Document& a, const Document& b) { return a.retrieval_score > b.retrieval_score; });
    if (docs.size() > config.top_k) docs.resize(config.top_k);
    return docs;
}

std::vector<EdgeQuery> edge_queries(const LatentHypothesis& hypothesis, const graph::CausalGraph& graph) {
    if (!graph.contains(hypothesis.latent_id) || !graph.variable(hypothesis.latent_id).is_latent())
        throw UsageError("hypothesis refers to '" + hypothesis.latent_id + "', which is not a latent variable");
    auto name = [&](const std::string& id) {
        return id == hypothesis.latent_id ? hypothesis.proposed_name : graph.variable(id).label();
    };
    std::vector<EdgeQuery> out;
    for (const auto& e : graph.incident_edges(hypothesis.latent_id)) {
        EdgeQuery q{e, name(e.from), name(e.to), ""};
        q.query = "does " + q.subject + " cause " + q.object;
        out.push_back(std::move(q));
    }
    return out;
}

double lexical_support(const std::string& subject, const std::string& object, const std::string& snippet,
                       std::size_t window) {
    auto wanted = unique_tokens(subject);
    for (auto& t : unique_tokens(object))
        if (std::find(wanted.begin(), wanted.end(), t) == wanted.end()) wanted.push_back(std::move(t));
    if (wanted.empty() || window == 0) return 0.0;
    const auto toks = text::content_tokens(snippet);
    std::size_t best = 0;
    const std::size_t starts = toks.size() > window ? toks.size() - window + 1 : 1;
    for (std::size_t s = 0; s < starts && best < wanted.size(); ++s) {
        const auto end = std::min(toks.size(), s + window);
        std::size_t hits = 0;
        for (const auto& w : wanted)
            if (std::find(toks.begin() + static_cast<std::ptrdiff_t>(s), toks.begin() + static_cast<std::ptrdiff_t>(end),
                          w) != toks.begin() + static_cast<std::ptrdiff_t>(end))
                ++hits;
        best = std::max(best, hits);
    }
    return static_cast<double>(best) / static_cast<double>(wanted.size());
}

std::string judge_prompt(const EdgeQuery& edge, const Document& document) {
    return "Does the following text support the claim that " + edge.subject + " causes " + edge.object +
           "? Reply with a single number between 0 and 1.\nTitle: " + document.title + "\nText: " + document.snippet +
           "\n";
}

Judgement judge_support(const EdgeQuery& edge, const std::vector<Document>& documents, const SourceConfig& config,
                        agents::ExecutorBackend* judge) {
    Judgement j;
    if (documents.empty()) return j;
    auto lexical = [&] {
        std::vector<double> s;
        for (const auto& d : documents) s.push_back(lexical_support(edge.subject, edge.object, d.snippet, config.snippet_window));
        return s;
    };
    if (judge) {
        try {
            for (const auto& d : documents) {
                const auto reply = text::trim(judge->generate(judge_prompt(edge, d), {0.0, 1.0}).text);
                std::size_t used = 0;
                double v = 0.0;
                try {
                    v = std::stod(reply, &used);
                } catch (const std::exception&) {
                    throw BackendError("judge reply is not a number: " + reply.substr(0, 40));
                }
                if (used == 0 || !(v >= 0.0 && v <= 1.0)) throw BackendError("judge score outside [0,1]: " + reply.substr(0, 40));
                j.per_document.push_back(v);
            }
        } catch (const FixtureError&) {
            throw;
        } catch (const BackendError& e) {
            spdlog::warn("judge failed on '{}': {}; using lexical support", edge.query, e.what());
            j.per_document.clear();
            j.fallback = true;
        }
    }
    if (j.per_document.empty()) j.per_document = lexical();
    j.score = *std::max_element(j.per_document.begin(), j.per_document.end());
    j.supports = j.score >= config.support_threshold;
    return j;
}

Verifier::Verifier(SourceConfig config, std::vector<Searcher*> searchers, agents::ExecutorBackend* judge)
    : config_(std::move(config)), searchers_(std::move(searchers)), judge_(judge) {
    config_.validate();
}

Verification Verifier::verify(const LatentHypothesis& hypothesis, const graph::CausalGraph& graph) {
    Verification out;
    const auto queries = edge_queries(hypothesis, graph);
    std::size_t failed_edges = 0;
    for (const auto& q : queries) {
        std::vector<std::future<std::vector<Document>>> pending;
        for (auto* s : searchers_)
            if (config_.settings(s->source()).enabled)
                pending.push_back(std::async(std::launch::async, [this, s, &q] { return search(*s, q.query, config_); }));
        bool any_ok = false;
        std::vector<Document> merged;
        for (auto& f : pending) {
            try {
                for (auto& d : f.get()) {
                    auto same = std::find_if(merged.begin(), merged.end(), [&](const Document& m) {
                        return m.source == d.source && m.doc_id == d.doc_id;
                    });
                    if (same == merged.end())
                        merged.push_back(std::move(d));
                    else if (d.retrieval_score > same->retrieval_score)
                        *same = std::move(d);
                }
                any_ok = true;
            } catch (const RetrievalError& e) {
                spdlog::warn("search failed for '{}': {}", q.query, e.what());
            } catch (const ParseError& e) {
                spdlog::warn("unreadable search response for '{}': {}", q.query, e.what());
            }
        }
        if (!any_ok) ++failed_edges;

        EvidenceRecord r;
        r.latent_id = hypothesis.latent_id;
        r.claim = hypothesis.proposed_name;
        r.edge = q.edge;
        r.query = q.query;
        r.record_id = "ev-" + text::hex64(text::fnv1a64(r.latent_id + "\n" + r.query + "\n" + r.edge.from + "\n" + r.edge.to));
        const auto judged = judge_support(q, merged, config_, judge_);
        std::vector<std::size_t> order(merged.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (judged.per_document[a] != judged.per_document[b]) return judged.per_document[a] > judged.per_document[b];
            if (merged[a].retrieval_score != merged[b].retrieval_score) return merged[a].retrieval_score > merged[b].retrieval_score;
            if (merged[a].source != merged[b].source) return merged[a].source < merged[b].source;
            return merged[a].doc_id < merged[b].doc_id;
        });
        for (std::size_t i = 0; i < order.size() && i < config_.top_k; ++i) {
            r.documents.push_back(merged[order[i]]);
            r.document_support.push_back(judged.per_document[order[i]]);
        }
        r.searched = any_ok && !merged.empty();
        r.supports = r.searched && judged.supports;
        r.support_score = judged.score;
        r.judge_fallback = judged.fallback;
        out.searched += r.searched;
        out.supported += r.supports;
        out.records.push_back(std::move(r));
    }
    out.unavailable = !queries.empty() && failed_edges == queries.size();
    return out;
}

std::string digest(const std::vector<EvidenceRecord>& records, std::size_t max_lines) {
    std::ostringstream out;
    std::size_t lines = 0;
    for (const auto& r : records) {
        if (lines++ == max_lines) break;
        char score[32];
        std::snprintf(score, sizeof score, "%.3f", r.support_score);
        out << "- " << r.query << ": " << (r.supports ? "supported" : r.searched ? "unsupported" : "no evidence") << " ("
            << score << ")";
        if (!r.documents.empty()) out << "; top: " << r.documents.front().title;
        out << "\n";
    }
    return out.str();
}

namespace {

class OfflineTransport : public Transport {
public:
    std::string get(const std::string& url) override { throw RetrievalError("offline mode has no recording for " + url); }
};

}  // namespace

SourceSet::SourceSet(const SourceConfig& config, Clock& clock) {
    config.validate();
    if (config.offline)
        base_ = config.fixture_dir.empty() ? std::unique_ptr<Transport>(std::make_unique<OfflineTransport>())
                                           : std::make_unique<FixtureTransport>(config.fixture_dir);
    else
        base_ = std::make_unique<HttpTransport>();
    Transport* t = base_.get();
    if (!config.offline && !config.record_dir.empty()) {
        recorder_ = std::make_unique<RecordingTransport>(*base_, config.record_dir);
        t = recorder_.get();
    }
    auto limiter = [&](Source s) {
        limiters_.push_back(std::make_unique<RateLimiter>(config.settings(s).rate_limit, clock));
        return limiters_.back().get();
    };
    if (config.arxiv.enabled)
        searchers_.push_back(std::make_unique<ArxivSearcher>(*t, config.arxiv.endpoint, limiter(Source::Arxiv)));
    if (config.wikipedia.enabled)
        searchers_.push_back(std::make_unique<WikipediaSearcher>(*t, config.wikipedia.endpoint, limiter(Source::Wikipedia)));
    if (config.local.enabled && !config.corpus_dir.empty())
        searchers_.push_back(std::make_unique<LocalSearcher>(LocalSearcher::load(config.corpus_dir)));
}

std::vector<Searcher*> SourceSet::searchers() const {
    std::vector<Searcher*> out;
    for (const auto& s : searchers_) out.push_back(s.get());
    return out;
}

}  // namespace tlvd::evidence
