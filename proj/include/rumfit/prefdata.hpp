#pragma once

// Rankings, profiles, the ballot-file format, partial-order completion and
// the identifiability (strong connectivity) check on comparison data.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rumfit/error.hpp"

namespace rumfit {

// A strict (possibly partial) preference order over m alternatives: the
// listed alternatives in order from most to least preferred.
class Ranking {
 public:
  Ranking() = default;

  Ranking(std::vector<int> order, int num_alternatives)
      : order_(std::move(order)), m_(num_alternatives) {
    if (m_ < 1) throw DataError("ranking needs at least one alternative");
    if (order_.empty()) throw DataError("ranking is empty");
    if (static_cast<int>(order_.size()) > m_)
      throw DataError("ranking lists more alternatives than exist");
    std::vector<char> seen(m_, 0);
    for (int a : order_) {
      if (a < 0 || a >= m_)
        throw DataError("alternative " + std::to_string(a) + " out of range [0, " +
                        std::to_string(m_) + ")");
      if (seen[a]) throw DataError("alternative " + std::to_string(a) + " listed twice");
      seen[a] = 1;
    }
  }

  const std::vector<int>& order() const noexcept { return order_; }
  int num_alternatives() const noexcept { return m_; }
  int size() const noexcept { return static_cast<int>(order_.size()); }
  bool is_total() const noexcept { return size() == m_; }
  int operator[](int position) const { return order_[position]; }

  // position_of()[a] = rank position of a, or -1 when a is unranked.
  std::vector<int> position_of() const {
    std::vector<int> pos(m_, -1);
    for (int i = 0; i < size(); ++i) pos[order_[i]] = i;
    return pos;
  }

  friend bool operator==(const Ranking&, const Ranking&) = default;
  friend auto operator<=>(const Ranking& a, const Ranking& b) {
    if (auto c = a.m_ <=> b.m_; c != 0) return c;
    return a.order_ <=> b.order_;
  }

 private:
  std::vector<int> order_;
  int m_ = 0;
};

struct Ballot {
  Ranking ranking;
  int weight = 1;

  friend bool operator==(const Ballot&, const Ballot&) = default;
};

// A preference profile. Identical rankings are merged (weights summed) and
// ballots are kept sorted, so two profiles holding the same multiset of
// rankings compare equal.
class Profile {
 public:
  Profile() = default;

  Profile(int num_alternatives, std::vector<Ballot> ballots,
          std::vector<std::string> names = {})
      : m_(num_alternatives), names_(std::move(names)) {
    if (m_ < 1) throw DataError("profile needs at least one alternative");
    if (!names_.empty() && static_cast<int>(names_.size()) != m_)
      throw DataError("expected " + std::to_string(m_) + " names, got " +
                      std::to_string(names_.size()));
    std::map<std::vector<int>, long long> merged;
    for (auto& b : ballots) {
      if (b.ranking.num_alternatives() != m_)
        throw DataError("ballot over " + std::to_string(b.ranking.num_alternatives()) +
                        " alternatives in a profile over " + std::to_string(m_));
      if (b.weight < 1) throw DataError("ballot weight must be a positive integer");
      merged[b.ranking.order()] += b.weight;
    }
    for (auto& [order, w] : merged) {
      ballots_.push_back({Ranking(order, m_), static_cast<int>(w)});
      total_ += w;
    }
    if (total_ < 1) throw DataError("profile contains no ballots");
  }

  // One unit-weight ballot per ranking.
  static Profile from_rankings(int num_alternatives, const std::vector<Ranking>& rankings,
                               std::vector<std::string> names = {}) {
    std::vector<Ballot> ballots;
    ballots.reserve(rankings.size());
    for (const auto& r : rankings) ballots.push_back({r, 1});
    return Profile(num_alternatives, std::move(ballots), std::move(names));
  }

  int num_alternatives() const noexcept { return m_; }
  const std::vector<Ballot>& ballots() const noexcept { return ballots_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  // n, the number of agents.
  long long total_weight() const noexcept { return total_; }

  // One ranking per agent, ballots repeated by weight, in canonical order.
  std::vector<Ranking> agents() const {
    std::vector<Ranking> out;
    out.reserve(static_cast<std::size_t>(total_));
    for (const auto& b : ballots_)
      for (int k = 0; k < b.weight; ++k) out.push_back(b.ranking);
    return out;
  }

  friend bool operator==(const Profile&, const Profile&) = default;

 private:
  int m_ = 0;
  std::vector<Ballot> ballots_;
  std::vector<std::string> names_;
  long long total_ = 0;
};

// ---------------------------------------------------------------------------
// Partial-order completion

enum class CompletionMode {
  // Unranked alternatives sit below the lowest-ranked mentioned one and are
  // mutually unordered.
  worse_than_mentioned,
};

// A ballot expanded into the constraint structure used by the samplers and
// likelihoods: prefix[0] > prefix[1] > ... > prefix[k-1] > every tail member.
struct CompletedBallot {
  int m = 0;
  std::vector<int> prefix;
  std::vector<int> tail;  // ascending

  bool is_total() const noexcept { return tail.empty(); }

  // Hasse constraints (a, b) meaning a > b.
  std::vector<std::pair<int, int>> constraints() const {
    std::vector<std::pair<int, int>> out;
    for (std::size_t i = 0; i + 1 < prefix.size(); ++i) out.emplace_back(prefix[i], prefix[i + 1]);
    for (int c : tail) out.emplace_back(prefix.back(), c);
    return out;
  }

  // Every pair (a, b) with a > b implied by the ballot. Tail members are not
  // compared with each other.
  std::vector<std::pair<int, int>> implied_pairs() const {
    std::vector<std::pair<int, int>> out;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
      for (std::size_t j = i + 1; j < prefix.size(); ++j) out.emplace_back(prefix[i], prefix[j]);
      for (int c : tail) out.emplace_back(prefix[i], c);
    }
    return out;
  }

  friend bool operator==(const CompletedBallot&, const CompletedBallot&) = default;
};

inline CompletedBallot complete_partial(
    const Ranking& r, CompletionMode mode = CompletionMode::worse_than_mentioned) {
  (void)mode;  // only one completion rule is supported
  CompletedBallot out;
  out.m = r.num_alternatives();
  out.prefix = r.order();
  const auto pos = r.position_of();
  for (int a = 0; a < out.m; ++a)
    if (pos[a] < 0) out.tail.push_back(a);
  return out;
}

// ---------------------------------------------------------------------------
// Comparison graph and the connectivity condition

class ComparisonGraph {
 public:
  explicit ComparisonGraph(int m) : m_(m), adj_(static_cast<std::size_t>(m) * m, 0) {}

  int size() const noexcept { return m_; }
  bool has_edge(int from, int to) const { return adj_[index(from, to)] != 0; }
  void add_edge(int from, int to) {
    if (from != to) adj_[index(from, to)] = 1;
  }
  int edge_count() const {
    return static_cast<int>(std::count(adj_.begin(), adj_.end(), char{1}));
  }

  friend bool operator==(const ComparisonGraph&, const ComparisonGraph&) = default;

 private:
  std::size_t index(int from, int to) const {
    return static_cast<std::size_t>(from) * m_ + to;
  }
  int m_;
  std::vector<char> adj_;
};

// Edge j -> j' iff some ballot implies j > j'.
inline ComparisonGraph comparison_graph(const Profile& p) {
  ComparisonGraph g(p.num_alternatives());
  for (const auto& b : p.ballots())
    for (auto [a, c] : complete_partial(b.ranking).implied_pairs()) g.add_edge(a, c);
  return g;
}

struct Condition1Result {
  bool satisfied = true;
  // When unsatisfied: a nonempty set that is never beaten by any alternative
  // outside it (its parameters can grow without bound), and the rest.
  std::vector<int> dominant;
  std::vector<int> dominated;
};

// Strongly connected components (Tarjan); component ids are in reverse
// topological order of the condensation.
inline std::vector<int> strongly_connected_components(const ComparisonGraph& g, int* count) {
  const int m = g.size();
  std::vector<int> index(m, -1), low(m, 0), comp(m, -1), stack;
  std::vector<char> on_stack(m, 0);
  int next_index = 0, next_comp = 0;
  // Iterative DFS; frames hold (node, next neighbour to try).
  std::vector<std::pair<int, int>> frames;
  for (int root = 0; root < m; ++root) {
    if (index[root] >= 0) continue;
    frames.push_back({root, 0});
    index[root] = low[root] = next_index++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!frames.empty()) {
      auto& [v, w] = frames.back();
      if (w < m) {
        const int u = w++;
        if (!g.has_edge(v, u)) continue;
        if (index[u] < 0) {
          index[u] = low[u] = next_index++;
          stack.push_back(u);
          on_stack[u] = 1;
          frames.push_back({u, 0});
        } else if (on_stack[u]) {
          low[v] = std::min(low[v], index[u]);
        }
        continue;
      }
      const int done = v;
      frames.pop_back();
      if (!frames.empty()) low[frames.back().first] = std::min(low[frames.back().first], low[done]);
      if (low[done] == index[done]) {
        int u;
        do {
          u = stack.back();
          stack.pop_back();
          on_stack[u] = 0;
          comp[u] = next_comp;
        } while (u != done);
        ++next_comp;
      }
    }
  }
  if (count) *count = next_comp;
  return comp;
}

inline Condition1Result check_condition1(const ComparisonGraph& g) {
  Condition1Result res;
  int ncomp = 0;
  const auto comp = strongly_connected_components(g, &ncomp);
  if (ncomp <= 1) return res;
  // A source component of the condensation has no incoming edge from outside.
  std::vector<char> has_incoming(ncomp, 0);
  for (int a = 0; a < g.size(); ++a)
    for (int b = 0; b < g.size(); ++b)
      if (comp[a] != comp[b] && g.has_edge(a, b)) has_incoming[comp[b]] = 1;
  int source = -1;
  for (int a = 0; a < g.size() && source < 0; ++a)
    if (!has_incoming[comp[a]]) source = comp[a];
  res.satisfied = false;
  for (int a = 0; a < g.size(); ++a) (comp[a] == source ? res.dominant : res.dominated).push_back(a);
  return res;
}

inline Condition1Result check_condition1(const Profile& p) {
  return check_condition1(comparison_graph(p));
}

// ---------------------------------------------------------------------------
// Rank correlation and score orderings

inline double kendall_tau(const Ranking& a, const Ranking& b) {
  if (!a.is_total() || !b.is_total()) throw DataError("kendall_tau needs total rankings");
  if (a.num_alternatives() != b.num_alternatives())
    throw DataError("kendall_tau: rankings over different alternative counts");
  const int m = a.num_alternatives();
  if (m < 2) return 1.0;
  const auto pa = a.position_of(), pb = b.position_of();
  long long concordant = 0, discordant = 0;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      const long long s = static_cast<long long>(pa[i] - pa[j]) * (pb[i] - pb[j]);
      (s > 0 ? concordant : discordant)++;
    }
  return static_cast<double>(concordant - discordant) / (0.5 * m * (m - 1));
}

// Alternatives sorted by decreasing score; equal scores keep index order.
inline Ranking order_by_score(const std::vector<double>& scores) {
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int i, int j) { return scores[i] > scores[j]; });
  return Ranking(std::move(idx), static_cast<int>(scores.size()));
}

// ---------------------------------------------------------------------------
// Ballot file format
//
//   # comment
//   m=<int>
//   names=<label>,<label>,...        (optional)
//   [<weight>:] <idx>><idx>>...      (weight defaults to 1)

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::optional<long long> parse_int(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

inline Profile parse_profile(std::string_view text) {
  using detail::trim;
  int m = -1;
  std::vector<std::string> names;
  std::vector<Ballot> ballots;
  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    std::string_view line = text.substr(start, nl == std::string_view::npos ? nl : nl - start);
    start = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (m < 0) {
      if (!line.starts_with("m=")) throw ParseError(line_no, "expected 'm=<count>' header");
      const auto v = detail::parse_int(line.substr(2));
      if (!v || *v < 1 || *v > 1'000'000) throw ParseError(line_no, "invalid alternative count");
      m = static_cast<int>(*v);
      continue;
    }
    if (line.starts_with("names=")) {
      if (!names.empty() || !ballots.empty())
        throw ParseError(line_no, "names= must appear once, before the ballots");
      for (auto n : detail::split(line.substr(6), ',')) names.emplace_back(trim(n));
      if (static_cast<int>(names.size()) != m)
        throw ParseError(line_no, "expected " + std::to_string(m) + " names");
      continue;
    }

    long long weight = 1;
    std::string_view body = line;
    if (const auto colon = line.find(':'); colon != std::string_view::npos) {
      const auto w = detail::parse_int(line.substr(0, colon));
      if (!w || *w < 1 || *w > 1'000'000'000) throw ParseError(line_no, "invalid ballot weight");
      weight = *w;
      body = trim(line.substr(colon + 1));
    }
    if (body.find('=') != std::string_view::npos || body.find(',') != std::string_view::npos ||
        body.find('~') != std::string_view::npos)
      throw ParseError(line_no, "ties are not supported; ballots must be strict orders");
    if (body.empty()) throw ParseError(line_no, "empty ballot");
    std::vector<int> order;
    std::vector<char> seen(m, 0);
    for (auto tok : detail::split(body, '>')) {
      const auto v = detail::parse_int(tok);
      if (!v) throw ParseError(line_no, "expected an alternative index, got '" + std::string(trim(tok)) + "'");
      if (*v < 0 || *v >= m)
        throw ParseError(line_no, "alternative " + std::to_string(*v) + " out of range [0, " +
                                      std::to_string(m) + ")");
      if (seen[*v]) throw ParseError(line_no, "alternative " + std::to_string(*v) + " listed twice");
      seen[*v] = 1;
      order.push_back(static_cast<int>(*v));
    }
    ballots.push_back({Ranking(std::move(order), m), static_cast<int>(weight)});
  }
  if (m < 0) throw ParseError(line_no, "missing 'm=<count>' header");
  if (ballots.empty()) throw ParseError(line_no, "profile contains no ballots");
  return Profile(m, std::move(ballots), std::move(names));
}

inline std::string serialize_profile(const Profile& p) {
  std::ostringstream os;
  os << "m=" << p.num_alternatives() << '\n';
  if (!p.names().empty()) {
    os << "names=";
    for (std::size_t i = 0; i < p.names().size(); ++i) os << (i ? "," : "") << p.names()[i];
    os << '\n';
  }
  for (const auto& b : p.ballots()) {
    os << b.weight << ": ";
    const auto& o = b.ranking.order();
    for (std::size_t i = 0; i < o.size(); ++i) os << (i ? ">" : "") << o[i];
    os << '\n';
  }
  return os.str();
}

// Converts the common election-data layout:
//
//   <m>
//   <1-based id>,<name>          (m lines)
//   <voters>,<vote total>,<unique orders>
//   <count>,<c1>,<c2>,...        (1-based candidate ids, most preferred first)
inline Profile parse_election_data(std::string_view text) {
  using detail::trim;
  std::vector<std::pair<int, std::string_view>> lines;
  {
    int line_no = 0;
    for (auto raw : detail::split(text, '\n')) {
      ++line_no;
      auto line = trim(raw);
      if (line.empty() || line.front() == '#') continue;
      lines.emplace_back(line_no, line);
    }
  }
  if (lines.empty()) throw ParseError(1, "empty election file");
  const auto mv = detail::parse_int(lines[0].second);
  if (!mv || *mv < 1) throw ParseError(lines[0].first, "expected the candidate count");
  const int m = static_cast<int>(*mv);
  if (static_cast<int>(lines.size()) < m + 2) throw ParseError(lines.back().first, "truncated header");
  std::vector<std::string> names(m);
  for (int i = 0; i < m; ++i) {
    const auto [ln, line] = lines[1 + i];
    const auto comma = line.find(',');
    const auto id = detail::parse_int(line.substr(0, comma));
    if (!id || comma == std::string_view::npos || *id < 1 || *id > m)
      throw ParseError(ln, "expected '<id>,<name>'");
    std::string name(trim(line.substr(comma + 1)));
    std::replace(name.begin(), name.end(), ',', ';');
    names[*id - 1] = name;
  }
  std::vector<Ballot> ballots;
  for (std::size_t k = static_cast<std::size_t>(m) + 2; k < lines.size(); ++k) {
    const auto [ln, line] = lines[k];
    if (line.find('{') != std::string_view::npos)
      throw ParseError(ln, "ties are not supported; ballots must be strict orders");
    const auto fields = detail::split(line, ',');
    const auto count = detail::parse_int(fields[0]);
    if (!count || *count < 1) throw ParseError(ln, "invalid vote count");
    if (fields.size() < 2) throw ParseError(ln, "empty ballot");
    std::vector<int> order;
    std::vector<char> seen(m, 0);
    for (std::size_t f = 1; f < fields.size(); ++f) {
      const auto c = detail::parse_int(fields[f]);
      if (!c || *c < 1 || *c > m) throw ParseError(ln, "candidate id out of range");
      if (seen[*c - 1]) throw ParseError(ln, "candidate listed twice");
      seen[*c - 1] = 1;
      order.push_back(static_cast<int>(*c - 1));
    }
    ballots.push_back({Ranking(std::move(order), m), static_cast<int>(*count)});
  }
  if (ballots.empty()) throw ParseError(lines.back().first, "no ballots");
  return Profile(m, std::move(ballots), std::move(names));
}

}  // namespace rumfit
