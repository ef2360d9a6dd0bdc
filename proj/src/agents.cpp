#include "probekit/agents.hpp"

#include "probekit/errors.hpp"
#include "probekit/prompts.hpp"
#include "probekit/random.hpp"
#include "probekit/synthgen.hpp"
#include "probekit/text.hpp"

namespace probekit::agents {

std::string_view to_string(AgentKind k) {
  switch (k) {
    case AgentKind::Vanilla: return "vanilla";
    case AgentKind::Proactive: return "proactive";
    case AgentKind::IclAif: return "icl-aif";
    case AgentKind::ProChatIp: return "prochatip";
  }
  return "vanilla";
}

AgentKind agent_kind_from_string(std::string_view s) {
  auto lower = text::to_lower(s);
  if (lower == "icl_aif" || lower == "iclaif") lower = "icl-aif";
  for (auto k : kAllAgents) {
    if (to_string(k) == lower) return k;
  }
  throw ValidationError("unknown agent kind '" + std::string(s) + "'");
}

std::string render_history(const DialogueHistory& history) {
  std::string out;
  const auto& entries = history.entries();
  for (std::size_t i = 0; i + 1 < entries.size(); ++i) {
    out += entries[i].speaker == Speaker::User ? "user: " : "assistant: ";
    out += entries[i].text;
    out += '\n';
  }
  return out;
}

std::string render_prompt(AgentKind kind, Stage stage, const DialogueHistory& history,
                          const TargetInfo& target, std::optional<Decision> decision,
                          const std::vector<std::string>* suggestions) {
  std::string body;
  const auto& u_t = history.last_user().text;
  switch (kind) {
    case AgentKind::Vanilla:
      body = "User's message: " + u_t;
      break;
    case AgentKind::Proactive:
      body = std::string(prompts::asset("proactive"));
      break;
    case AgentKind::IclAif:
      if (stage == Stage::Suggest) {
        body = std::string(prompts::asset("icl_aif"));
      } else {
        if (suggestions == nullptr || suggestions->empty()) {
          throw ContractError("ICL-AIF respond stage needs the suggestions from the suggest stage");
        }
        body = prompts::fill(std::string(prompts::asset("icl_aif_respond")), "[suggestions]",
                             text::join(*suggestions, "\n"));
      }
      break;
    case AgentKind::ProChatIp:
      if (!decision) throw ContractError("ProChatIp prompt requires a strategy decision");
      body = std::string(prompts::asset(*decision == Decision::Probe ? "prochatip_ask"
                                                                     : "prochatip_answer"));
      break;
  }
  body = prompts::fill(std::move(body), "[target information]", target.question);
  body = prompts::fill(std::move(body), "[u_t]", u_t);
  const auto past = render_history(history);
  return past.empty() ? body : "Dialogue history:\n" + past + "\n" + body;
}

gateway::ChatRequest build_request(AgentKind kind, Stage stage, const DialogueHistory& history,
                                   const TargetInfo& target, std::optional<Decision> decision,
                                   const std::vector<std::string>* suggestions,
                                   std::uint64_t seed) {
  gateway::ChatRequest req;
  req.seed = seed;
  req.messages.push_back({gateway::Role::System, std::string(prompts::asset("chatbot_system"))});
  req.messages.push_back(
      {gateway::Role::User, render_prompt(kind, stage, history, target, decision, suggestions)});
  return req;
}

namespace {

// Finds "<label>:" at the start of a line (case-insensitive); returns the
// offset just past the colon.
std::optional<std::size_t> find_label(const std::string& lower, std::string_view label) {
  std::size_t pos = 0;
  while ((pos = lower.find(label, pos)) != std::string::npos) {
    std::size_t line_start = pos;
    while (line_start > 0 && (lower[line_start - 1] == ' ' || lower[line_start - 1] == '\t')) {
      --line_start;
    }
    std::size_t after = pos + label.size();
    while (after < lower.size() && (lower[after] == ' ' || lower[after] == '\t')) ++after;
    if ((line_start == 0 || lower[line_start - 1] == '\n') && after < lower.size() &&
        lower[after] == ':') {
      return after + 1;
    }
    pos += label.size();
  }
  return std::nullopt;
}

}  // namespace

std::string parse_response(std::string_view raw) {
  const std::string s(raw);
  if (auto at = find_label(text::to_lower(s), "response")) return text::trim(s.substr(*at));
  return text::trim(s);
}

AgentTurnOutput parse_strategy(std::string_view raw, AgentKind kind) {
  const std::string s(raw);
  const auto lower = text::to_lower(s);
  AgentTurnOutput out;
  out.raw = s;
  const auto resp = find_label(lower, "response");
  if (!resp) throw ParseError("agent output has no Response section", s);
  const auto response_start = lower.rfind("response", *resp);

  if (kind == AgentKind::Proactive) {
    const auto strat = find_label(lower, "strategy");
    if (!strat || *strat > response_start) {
      throw ParseError("agent output has no Strategy section", s);
    }
    const auto value = text::to_lower(text::trim(s.substr(*strat, response_start - *strat)));
    if (value == "ask") {
      out.strategy = Decision::Probe;
    } else if (value == "answer") {
      out.strategy = Decision::Wait;
    } else {
      throw ParseError("strategy must be Ask or Answer, got '" + value + "'", s);
    }
    out.response_text = text::trim(s.substr(*resp));
    return out;
  }
  if (kind == AgentKind::IclAif) {
    const auto sugg = find_label(lower, "suggestions");
    if (!sugg || *sugg > response_start) {
      throw ParseError("agent output has no Suggestions section", s);
    }
    std::vector<std::string> items;
    for (const auto& line : text::split_lines(s.substr(*sugg, response_start - *sugg))) {
      auto t = text::trim(line);
      if (!t.empty()) items.push_back(std::move(t));
    }
    if (items.size() != 3) {
      throw ParseError("expected 3 suggestions, got " + std::to_string(items.size()), s);
    }
    out.suggestions = std::move(items);
    out.response_text = text::trim(s.substr(*resp));
    return out;
  }
  throw ContractError("parse_strategy applies to Proactive and ICL-AIF output only");
}

AgentTurnOutput respond(AgentKind kind, gateway::Gateway& gateway, const DialogueHistory& history,
                        const TargetInfo& target, std::optional<Decision> decision,
                        std::uint64_t seed) {
  auto call = [&](Stage stage, const std::vector<std::string>* sugg, int attempt) {
    return gateway.complete(build_request(kind, stage, history, target, decision, sugg,
                                          attempt == 0 ? seed : mix_seed(seed, 1)));
  };
  // Runs `once` and retries a single time on a parse or contract violation.
  auto with_retry = [](auto&& once) {
    try {
      return once(0);
    } catch (const ParseError&) {
      return once(1);
    }
  };
  auto non_empty = [](AgentTurnOutput out) {
    if (text::trim(out.response_text).empty()) {
      throw ParseError("agent response is empty", out.raw);
    }
    return out;
  };

  switch (kind) {
    case AgentKind::Vanilla:
      return with_retry([&](int attempt) {
        AgentTurnOutput out;
        out.raw = call(Stage::Respond, nullptr, attempt);
        out.response_text = parse_response(out.raw);
        return non_empty(std::move(out));
      });
    case AgentKind::Proactive:
      return with_retry([&](int attempt) {
        return non_empty(parse_strategy(call(Stage::Respond, nullptr, attempt), kind));
      });
    case AgentKind::IclAif: {
      auto first = with_retry(
          [&](int attempt) { return parse_strategy(call(Stage::Suggest, nullptr, attempt), kind); });
      return with_retry([&](int attempt) {
        AgentTurnOutput out;
        out.suggestions = first.suggestions;
        out.raw = first.raw + "\n---\n" + call(Stage::Respond, &*first.suggestions, attempt);
        out.response_text = parse_response(out.raw.substr(out.raw.rfind("\n---\n") + 5));
        out.strategy = text::contains(out.response_text, "?") ? Decision::Probe : Decision::Wait;
        return non_empty(std::move(out));
      });
    }
    case AgentKind::ProChatIp: {
      if (!decision) throw ContractError("ProChatIp respond requires a strategy decision");
      return with_retry([&](int attempt) {
        AgentTurnOutput out;
        out.strategy = decision;
        out.raw = call(Stage::Respond, nullptr, attempt);
        out.response_text = parse_response(out.raw);
        if (*decision == Decision::Probe && !text::contains(out.response_text, "?")) {
          throw ParseError("probe response contains no question", out.raw);
        }
        return non_empty(std::move(out));
      });
    }
  }
  throw ContractError("unknown agent kind");
}

// ---------------------------------------------------------------------------
// Mock scripts

namespace {

std::string between(const std::string& s, std::string_view before, std::string_view after) {
  auto b = s.find(before);
  if (b == std::string::npos) return {};
  b += before.size();
  auto e = s.find(after, b);
  return s.substr(b, e == std::string::npos ? std::string::npos : e - b);
}

std::string user_message(const std::string& prompt) {
  return text::trim(between(prompt, "User's message: ", "\n"));
}

int turn_of(const std::string& prompt) {
  int users = 0;
  if (!prompt.starts_with("Dialogue history:\n")) return 1;
  const auto block = between(prompt, "Dialogue history:\n", "\n\n");
  for (const auto& line : text::split_lines(block)) {
    if (line.starts_with("user: ")) ++users;
  }
  return users + 1;
}

std::string mock_answer(const std::string& user) {
  static const std::vector<std::string> bank{
      "the numbers mostly follow demand expectations and freight costs.",
      "the main drivers are supply discipline and steady industrial demand.",
      "the recent moves reflect inventory swings more than fundamentals.",
      "the trend is broadly stable, with seasonal effects doing most of the work.",
  };
  auto tokens = text::content_tokens(user);
  if (tokens.size() > 4) tokens.resize(4);
  const auto& tail = bank[text::fnv1a(user) % bank.size()];
  if (tokens.empty()) return "Broadly, " + tail;
  return "On " + text::join(tokens, " ") + ", " + tail;
}

std::string mock_probe(const std::string& user, std::string target) {
  target = text::trim(target);
  while (!target.empty() && (target.back() == '.' || target.back() == '?')) target.pop_back();
  const auto tokens = text::content_tokens(user);
  const auto hook = tokens.empty() ? std::string("this") : tokens.front();
  return mock_answer(user) + " Since you brought up " + hook +
         ", knowing your side would help me tailor the outlook: " + target + "?";
}

std::string target_from_task(const std::string& prompt) {
  return between(prompt, "at the appropriate time: ", ".\n");
}

}  // namespace

void install_mock_scripts(gateway::MockBackend& backend) {
  backend.add_rule("prochatip-ask", "- Selected strategy: Ask", [](const gateway::ChatRequest& r) {
    const auto& p = r.last_user_content();
    return mock_probe(user_message(p), between(p, "- Follow-up question: ", "\n"));
  });
  backend.add_rule("prochatip-answer", "- Selected strategy: Answer",
                   [](const gateway::ChatRequest& r) {
                     return mock_answer(user_message(r.last_user_content()));
                   });
  backend.add_rule("proactive", "Strategy: [Ask/Answer]", [](const gateway::ChatRequest& r) {
    const auto& p = r.last_user_content();
    const auto u = user_message(p);
    if (turn_of(p) >= 2) return "Strategy: Ask\nResponse: " + mock_probe(u, target_from_task(p));
    return "Strategy: Answer\nResponse: " + mock_answer(u);
  });
  backend.add_rule("icl-aif-suggest", "Step 1 — Suggest", [](const gateway::ChatRequest&) {
    return std::string(
        "Suggestions:\n"
        "Acknowledge the user's current concern before anything else.\n"
        "Connect the answer to the user's own market situation.\n"
        "Ask for the target information only once the topic allows it.\n"
        "\nResponse:\n");
  });
  backend.add_rule("icl-aif-respond", "Suggestions for this reply:",
                   [](const gateway::ChatRequest& r) {
                     const auto& p = r.last_user_content();
                     const auto u = user_message(p);
                     const int t = turn_of(p);
                     if (t >= 3 && t % 2 == 1) {
                       return "Response: " + mock_probe(u, target_from_task(p));
                     }
                     return "Response: " + mock_answer(u);
                   });
  backend.add_rule(
      "vanilla",
      [](const gateway::ChatRequest& r) {
        const auto& p = r.last_user_content();
        const auto body = p.starts_with("Dialogue history:\n") ? p.substr(p.find("\n\n") + 2) : p;
        return body.starts_with("User's message: ");
      },
      [](const gateway::ChatRequest& r) {
        return mock_answer(user_message(r.last_user_content()));
      });
}

std::string RemoteStrategy::render(const DialogueHistory& history, const TargetInfo& target) const {
  std::string ask, answer;
  for (const auto& rule : synth::builtin_rules()) {
    auto& dst = rule.label == Decision::Probe ? ask : answer;
    if (!dst.empty()) dst += '\n';
    dst += "- " + rule.description;
  }
  std::string body(prompts::asset("cs_classifier"));
  body = prompts::fill(std::move(body), "[target information]", target.question);
  body = prompts::fill(std::move(body), "[ask rules]", ask);
  body = prompts::fill(std::move(body), "[answer rules]", answer);
  body = prompts::fill(std::move(body), "[u_t]", history.last_user().text);
  const auto past = render_history(history);
  return past.empty() ? body : "Dialogue history:\n" + past + "\n" + body;
}

policy::DecisionResult RemoteStrategy::decide(const DialogueHistory& history,
                                              const TargetInfo& target, std::uint64_t seed) {
  gateway::ChatRequest req;
  req.seed = seed;
  req.messages.push_back({gateway::Role::User, render(history, target)});
  std::string raw;
  for (int attempt = 0; attempt < 2; ++attempt) {
    raw = gateway_.complete(req);
    const auto word = text::to_lower(text::trim(raw));
    if (word.starts_with("ask")) return {Decision::Probe, 1.0};
    if (word.starts_with("answer")) return {Decision::Wait, 0.0};
    req.seed = mix_seed(seed, 1);
  }
  throw ParseError("strategy classifier must answer Ask or Answer", raw);
}

void install_mock_strategy_script(gateway::MockBackend& backend) {
  backend.add_rule("cs-classifier", "Output exactly one word: Ask or Answer",
                   [](const gateway::ChatRequest& r) {
                     const auto& p = r.last_user_content();
                     const auto u = user_message(p);
                     if (text::trim(u).starts_with(prompts::kRefusalSentence)) {
                       return std::string("Answer");
                     }
                     return std::string(turn_of(p) >= 3 ? "Ask" : "Answer");
                   });
}

}  // namespace probekit::agents
