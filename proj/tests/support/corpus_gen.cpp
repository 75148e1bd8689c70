#include "support/corpus_gen.hpp"

#include <random>
#include <set>
#include <stdexcept>
#include <string>

#include "codesumm/tokenizer.hpp"

namespace corpus_gen {

namespace {

using codesumm::RawPair;

const std::vector<std::string> kNouns = {
    "buffer",     "cache",      "channel",   "color",      "counter",
    "depth",      "event",      "filter",    "frame",      "handler",
    "header",     "height",     "image",     "index",      "label",
    "layout",     "level",      "limit",     "listener",   "margin",
    "message",    "mode",       "model",     "node",       "offset",
    "option",     "owner",      "packet",    "panel",      "parent",
    "path",       "rate",       "record",    "result",     "score",
    "session",    "state",      "status",    "stream",     "timeout",
    "title",      "token",      "value",     "view",       "weight",
    "width",      "angle",      "radius",    "vertex",     "consumption",
    "account",    "action",     "address",   "agent",      "alias",
    "anchor",     "archive",    "attribute", "balance",    "batch",
    "binding",    "block",      "border",    "bounds",     "branch",
    "bridge",     "broker",     "bucket",    "bundle",     "button",
    "capacity",   "category",   "cell",      "chart",      "checksum",
    "client",     "clock",      "cluster",   "column",     "command",
    "comment",    "connection", "console",   "content",    "context",
    "contract",   "cursor",     "dialog",    "digest",     "document",
    "domain",     "duration",   "edge",      "editor",     "element",
    "endpoint",   "engine",     "entry",     "envelope",   "error",
    "factory",    "field",      "flag",      "folder",     "font",
    "fragment",   "gateway",    "graph",     "grid",       "group",
    "host",       "icon",       "identity",  "instance",   "interval",
    "job",        "key",        "keyword",   "layer",      "lease",
    "lifetime",   "link",       "location",  "lock",       "manager",
    "mapping",    "marker",     "member",    "memory",     "menu",
    "metric",     "monitor",    "name",      "namespace",  "network",
    "observer",   "order",      "origin",    "output",     "page",
    "parameter",  "partition",  "password",  "pattern",    "peer",
    "permission", "phase",      "pixel",     "pointer",    "policy",
    "pool",       "port",       "position",  "prefix",     "priority",
    "profile",    "property",   "provider",  "proxy",      "quantity",
    "query",      "queue",      "quota",     "range",      "reader",
    "reason",     "receiver",   "region",    "registry",   "report",
    "repository", "request",    "resource",  "response",   "revision",
    "role",       "route",      "router",    "row",        "rule",
    "sample",     "scale",      "schema",    "scope",      "screen",
    "script",     "sector",     "segment",   "selection",  "sender",
    "sequence",   "server",     "service",   "shape",      "signal",
    "signature",  "site",       "size",      "slot",       "snapshot",
    "socket",     "source",     "space",     "span",       "speed",
    "stack",      "stage",      "storage",   "string",     "subject",
    "summary",    "table",      "tag",       "target",     "task",
    "template",   "term",       "text",      "theme",      "thread",
    "threshold",  "ticket",     "timer",     "timestamp",  "topic",
    "trace",      "track",      "transfer",  "transition", "tree",
    "trigger",    "type",       "unit",      "update",     "user",
    "variable",   "vector",     "version",   "volume",     "watcher",
    "window",     "worker",     "workspace", "writer",     "zone"};

const std::vector<std::string> kModifiers = {
    "max",      "min",     "total",    "current",  "default", "active",
    "remote",   "local",   "cached",   "pending",  "initial", "last",
    "next",     "primary", "visible",  "internal", "shared",  "global",
    "previous", "base",    "raw",      "expected", "actual",  "temporary"};

const std::vector<std::string> kTypes = {"int",     "long",   "double",
                                         "float",   "boolean", "String",
                                         "Object",  "byte"};

struct Rng {
  std::mt19937_64 gen;
  explicit Rng(std::uint64_t seed) : gen(seed) {}
  std::size_t below(std::size_t n) { return (std::size_t)(gen() % n); }
  const std::string& pick(const std::vector<std::string>& v) {
    return v[below(v.size())];
  }
};

std::string capitalize(const std::string& w) {
  std::string out = w;
  out[0] = (char)(out[0] - 'a' + 'A');
  return out;
}

// 1..max_words word phrase: optional modifier then nouns
std::vector<std::string> phrase(Rng& rng, std::size_t max_words) {
  const std::size_t n = 1 + rng.below(max_words);
  std::vector<std::string> words;
  if (n >= 2 && rng.below(2) == 0) words.push_back(rng.pick(kModifiers));
  while (words.size() < n) {
    const std::string& w = rng.pick(kNouns);
    if (words.empty() || words.back() != w) words.push_back(w);
  }
  return words;
}

std::string camel(const std::vector<std::string>& words, bool lower_first) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    out += (i == 0 && lower_first) ? words[i] : capitalize(words[i]);
  }
  return out;
}

std::string upper_snake(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += '_';
    for (char c : words[i]) out += (char)(c - 'a' + 'A');
  }
  return out;
}

std::string join(const std::vector<std::string>& words,
                 const std::string& sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += sep;
    out += words[i];
  }
  return out;
}

// Extra body statements; they lengthen and diversify the method source
// without touching the comment.
std::string embellishment(Rng& rng, const std::string& field) {
  switch (rng.below(12)) {
    case 0:
      return "if (" + field + " == null) { throw new IllegalStateException(\"" +
             field + " not initialized\"); } ";
    case 1: {
      const auto w = phrase(rng, 2);
      return "log.debug(\"updating " + join(w) + "\", " + field + "); ";
    }
    case 2:
      return "this.modificationCount++; ";
    case 3:
      return "notifyStateChangedListeners(); ";
    case 4: {
      const auto w = phrase(rng, 2);
      return "final long " + camel(w, true) +
             "Stamp = System.currentTimeMillis(); ";
    }
    case 5:
      return "synchronized (this.stateLock) { this.dirty = true; } ";
    case 6: {
      const auto w = phrase(rng, 2);
      return "assert " + field + " != null : \"missing " + join(w) + "\"; ";
    }
    case 7: {
      const auto w = phrase(rng, 2);
      const std::string local = camel(w, true);
      return "final int " + local + "Count = this." + local +
             "Registry.size(); if (" + local +
             "Count > MAX_CAPACITY) { evictOldest(" + local + "Count); } ";
    }
    case 8: {
      const auto w = phrase(rng, 2);
      const std::string local = camel(w, true);
      return "for (int i = 0; i < " + local + "Handlers.size(); i++) { " +
             local + "Handlers.get(i).onChanged(this); } ";
    }
    case 9: {
      const auto w = phrase(rng, 2);
      return "if (!this.initialized) { initialize" + camel(w, false) +
             "Defaults(); this.initialized = true; } ";
    }
    case 10: {
      const auto w = phrase(rng, 2);
      const std::string local = camel(w, true);
      return "final " + capitalize(local) + "Validator validator = " +
             "getValidatorFor(" + local + ".getClass()); "
             "validator.check(" + local + ", this.strictMode); ";
    }
    default:
      return "checkNotDisposed(); ";
  }
}

std::string with_body(Rng& rng, const std::string& signature,
                      const std::string& field, const std::string& body,
                      std::size_t max_extra) {
  std::string out = signature + " { ";
  // one to max_extra+1 extra statements keeps method lengths near the
  // filtered corpus profile instead of bare one-liners
  const std::size_t extras = 1 + rng.below(max_extra + 1);
  for (std::size_t i = 0; i < extras; ++i) out += embellishment(rng, field);
  out += body;
  out += " }";
  return out;
}

RawPair make_pair(Rng& rng) {
  const std::size_t kind = rng.below(12);
  const std::string type = rng.pick(kTypes);
  RawPair p;
  switch (kind) {
    case 0: {
      const auto w = phrase(rng, 3);
      const std::string field = camel(w, true);
      p.method_source =
          with_body(rng, "public " + type + " get" + camel(w, false) + "()",
                    field, "return " + field + ";", 1);
      p.comment_source = "Gets the " + join(w) + ".";
      break;
    }
    case 1: {
      const auto w = phrase(rng, 3);
      p.method_source = with_body(
          rng, "public " + type + " get" + camel(w, false) + "()",
          camel(w, true),
          "return getValueAs" + capitalize(type) + "(" + upper_snake(w) +
              ");",
          1);
      p.comment_source = "Returns the " + join(w) + " of this object.";
      break;
    }
    case 2: {
      const auto w = phrase(rng, 3);
      const std::string field = camel(w, true);
      p.method_source = with_body(
          rng, "public void set" + camel(w, false) + "(" + type + " value)",
          field, "this." + field + " = value;", 2);
      p.comment_source = "Sets the " + join(w) + " to the given value.";
      break;
    }
    case 3: {
      const auto w = phrase(rng, 2);
      const std::string field = camel(w, true) + "Enabled";
      p.method_source = with_body(
          rng, "public boolean is" + camel(w, false) + "Enabled()", field,
          "return " + field + ";", 1);
      p.comment_source = "Returns true if the " + join(w) + " is enabled.";
      break;
    }
    case 4: {
      const auto item = phrase(rng, 2), list = phrase(rng, 2);
      const std::string field = camel(list, true) + "List";
      p.method_source = with_body(
          rng,
          "public void add" + camel(item, false) + "(" + type + " item)",
          field, field + ".add(item);", 2);
      p.comment_source =
          "Adds a " + join(item) + " to the " + join(list) + " list.";
      break;
    }
    case 5: {
      const auto item = phrase(rng, 2), list = phrase(rng, 2);
      const std::string field = camel(list, true) + "List";
      p.method_source = with_body(
          rng,
          "public void remove" + camel(item, false) + "(" + type + " item)",
          field, field + ".remove(item);", 2);
      p.comment_source =
          "Removes a " + join(item) + " from the " + join(list) + " list.";
      break;
    }
    case 6: {
      const auto item = phrase(rng, 2), list = phrase(rng, 2);
      const std::string field = camel(list, true) + "List";
      p.method_source = with_body(
          rng, "public int count" + camel(item, false) + "s()", field,
          "return " + field + ".size();", 1);
      p.comment_source = "Returns the number of " + join(item) + " in the " +
                         join(list) + " list.";
      break;
    }
    case 7: {
      const auto item = phrase(rng, 2), list = phrase(rng, 2);
      const std::string field = camel(list, true) + "List";
      p.method_source = with_body(
          rng, "public void clear" + camel(item, false) + "s()", field,
          "for (int i = 0; i < " + field + ".size(); i++) { " + field +
              ".get(i).dispose(); } " + field + ".clear();",
          1);
      p.comment_source = "Removes all " + join(item) + " from the " +
                         join(list) + " list.";
      break;
    }
    case 8: {
      const auto w = phrase(rng, 3);
      const std::string cls = capitalize(rng.pick(kNouns));
      const std::string field = camel(w, true);
      p.method_source = with_body(
          rng, "public " + cls + " create" + camel(w, false) + "()", field,
          "return new " + cls + "(this." + field + ");", 1);
      p.comment_source = "Creates a new " + join(w) + " for this object.";
      break;
    }
    case 9: {
      const auto w = phrase(rng, 3);
      const std::string field = camel(w, true);
      p.method_source = with_body(
          rng, "public void render" + camel(w, false) + "()", field,
          "setText(Message.render(data, " + field + ".getPattern(), "
          "attributes));",
          1);
      p.comment_source = "Renders the " + join(w) + " and updates the text.";
      break;
    }
    case 10: {
      const auto item = phrase(rng, 2), list = phrase(rng, 2);
      const std::string field = camel(list, true) + "List";
      p.method_source = with_body(
          rng,
          "public boolean contains" + camel(item, false) + "(" + type +
              " item)",
          field, "return " + field + ".contains(item);", 1);
      p.comment_source = "Returns true if the " + join(list) +
                         " list contains the given " + join(item) + ".";
      break;
    }
    default: {
      const auto w = phrase(rng, 3);
      const std::string field = camel(w, true);
      p.method_source = with_body(
          rng, "public void reset" + camel(w, false) + "()", field,
          "this." + field + " = DEFAULT_" + upper_snake(w) + ";", 2);
      p.comment_source = "Resets the " + join(w) + " to its default value.";
      break;
    }
  }
  return p;
}

}  // namespace

std::vector<RawPair> raw_pairs(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<RawPair> out;
  std::set<std::string> seen;  // keyed by tokenized method
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (++attempts > count * 200 + 1000) {
      throw std::runtime_error(
          "corpus_gen: cannot produce enough distinct pairs");
    }
    RawPair pair = make_pair(rng);
    const auto method_tokens = codesumm::tokenize_code(pair.method_source);
    const auto comment_tokens =
        codesumm::tokenize_comment(pair.comment_source);
    if (!codesumm::filter_pair(method_tokens, comment_tokens)) continue;
    if (!seen.insert(join(method_tokens)).second) continue;
    out.push_back(std::move(pair));
  }
  return out;
}

codesumm::TokenizedCorpus tokenized_corpus(std::size_t count,
                                           std::uint64_t seed) {
  codesumm::TokenizedCorpus corpus;
  for (const RawPair& p : raw_pairs(count, seed)) {
    corpus.pairs.push_back({codesumm::tokenize_code(p.method_source),
                            codesumm::tokenize_comment(p.comment_source)});
  }
  return corpus;
}

}  // namespace corpus_gen
