#ifndef PCHECK_PROMPTS_HPP
#define PCHECK_PROMPTS_HPP

// Prompt templates shipped with the pipeline. Slots are written `{{name}}`;
// single braces are literal text (the judge template contains a JSON shape).

#include <map>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pcheck/corpus.hpp"
#include "pcheck/error.hpp"
#include "pcheck/util.hpp"

namespace pcheck {

namespace prompt_id {
inline constexpr std::string_view kSummarize = "summarize_gp";
inline constexpr std::string_view kCollect = "collect_checklist";
inline constexpr std::string_view kJudge = "judge";
inline constexpr std::string_view kRefine = "refine";
inline constexpr std::string_view kRespond = "respond";
inline constexpr std::string_view kInferChecklist = "infer_checklist";
inline constexpr std::string_view kGenerateChecklist = "generate_checklist";
}  // namespace prompt_id

struct PromptTemplate {
  std::string id;
  std::string text;

  std::set<std::string> slots() const {
    static const std::regex slot_re(R"(\{\{([A-Za-z_][A-Za-z0-9_]*)\}\})");
    std::set<std::string> out;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), slot_re);
         it != std::sregex_iterator(); ++it) {
      out.insert((*it)[1].str());
    }
    return out;
  }

  /// Throws ValidationError naming the first required slot left unfilled.
  void check_filled(const std::map<std::string, std::string>& vars) const {
    for (const auto& slot : slots()) {
      if (!vars.contains(slot)) {
        throw ValidationError("prompt '" + id + "' requires slot '" + slot +
                              "'");
      }
    }
  }

  std::string render(const std::map<std::string, std::string>& vars) const {
    check_filled(vars);
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
      const std::size_t open = text.find("{{", pos);
      if (open == std::string::npos) {
        out.append(text, pos, std::string::npos);
        break;
      }
      const std::size_t close = text.find("}}", open + 2);
      if (close == std::string::npos) {
        out.append(text, pos, std::string::npos);
        break;
      }
      const std::string name = text.substr(open + 2, close - open - 2);
      const auto it = vars.find(name);
      out.append(text, pos, open - pos);
      if (it != vars.end()) {
        out += it->second;
      } else {
        out.append(text, open, close + 2 - open);
      }
      pos = close + 2;
    }
    return out;
  }
};

namespace detail {

inline const char* const kSummarizeText =
    R"([Instruction]
Your task is to infer the [User's General Profile] (GP) from the past [Interaction History of User], with specific, contrastive, and fine-grained reasoning-not a generic summary.
Use both [Chosen Model Response] and [Rejected Model Response] as primary comparative evidence.
For each pair, analyze what concrete aspects made the chosen response more aligned with the user's taste and what made the rejected one less so.
Then, synthesize a rich, multidimensional profile capturing the user's preferences across content, tone, reasoning style, and structure.

##Requirements
Identify explicit contrasts for each (Chosen, Rejected) pair:
what traits were preferred or disliked.
Cluster insights by aspect:
- Content Preference (topics, detail, concreteness, etc..)
- Style (analytical, cautious, comparative, exploratory, etc..)
- Tone & Attitude (empathetic, assertive, neutral, reflective, etc..)
- Structure & Delivery (organized, concise, example-rich, stepwise, etc..)
Write the final GP as a rich, descriptive text with concrete behavioral signals (not abstract adjectives).
Avoid shallow generalizations like "user prefers clear answers."
Instead, explain how and why the user prefers certain types of responses.

[Inputs]
[Interaction History of User]: {{history}}

[Output]
[GP] (Write only the GP text itself - no labels, no headings, no explanations.):
)";

inline const char* const kCollectText =
    R"([Instruction]
You are a rigorous personalization checklist designer.
##Goal
Given a [User's General Preference] (GP), a [Current User Query] (Q), a high-quality [Chosen Model Response] that aligns with the user's preference, and a [Rejected Model Response] that does not, generate a compact but expressive [Personalized Checklist] that can later verify whether any candidate response is personalized for this user on this GP and Q.

##Critical Instruction
- Although you are provided with Chosen and Rejected responses to understand what distinguishes preferred vs. non-preferred behavior,your final output MUST appear as if it was created solely from GP and Q.
That means:
- You should use Chosen-Rejected contrast only implicitly to discover what matters to the user, but
- The output text itself must not refer to, mention, or reveal that any contrast was used.
- The final checklist must read like it was inferred only from (GP + Q). Be explicit about the chain : state the evidence from GP and Q -> facet -> checklist criterion.

##Requirements
- Internally, extract concrete evidence from GP, Q, and the implicit contrast between Chosen vs. Rejected.
- Be explicit in reasoning (internally):
evidence from (GP + Q + Chosen-Rejected contrast) -> facet -> checklist criterion.
- But in the output, only show [evidence] whether (from GP and Q) or (only from GP or Q) , [facets], and [criteria] that could plausibly be derived from GP + Q, GP only, or Q only.
- Each criterion should capture a specific personalization aspect (tone, reasoning style, value emphasis, level of concreteness, etc.).
- Keep it short and readable (bullets, one-liners).
- The final checklist must be self-contained and directly usable for evaluating future responses, without referencing Chosen or Rejected.
- Output a JSON object of the form {"checklist": [{"evidence": "...", "facet": "...", "criterion": "..."}, ...]}.

{{examples}}

[Inputs]
[User's General Preference]: {{gp}}
[Current User Query] : {{query}}
[Chosen Model response]: {{chosen}}
[Rejected Model response]: {{rejected}}

[Output]
[Personalized Checklist] (Json format):
)";

inline const char* const kJudgeText =
    R"([Instruction]
You are a rigorous personalization verifier.
##Task
For EACH personalized checklist item:
Assign a 1-10 score based solely on [Candidate Model response], using [User GP]/[Current User Query] only to interpret intent. Ignore criteria not present in [Personalized Checklist].
Before you assign the score for a criterion, briefly explain your reasoning about how well the [Candidate Model response]
satisfies that specific criterion. This reasoning must be included in the final JSON output as a "reasoning" field next to "criterion" and before "score".

###Scoring rubric for each criterion in Personalized Checklist:
10 = Fully and explicitly satisfies the criterion; multiple clear, direct signals; no contradictions.
9 = Very strong satisfaction; clear evidence; tiny/immaterial gap.
8 = Strong satisfaction; at least one direct signal; minor gaps.
7 = Good satisfaction; mostly met with some notable gaps.
6 = Fair/partial satisfaction; indirect or mixed support; missing key detail(s).
5 = Weak satisfaction; generic/vague alignment with clear omissions.
4 = Very weak; tenuous/off-target support or partial contradiction.
3 = Minimal alignment; mostly irrelevant or unclear.
2 = Barely any alignment; largely irrelevant; possible contradiction.
1 = Not satisfied; absent or clearly contradictory.

For [Verify Result] (Json format), return ONLY a single JSON object with this shape (no extra text):
{"results": [
{"index": 1, "criterion": "<exact criterion item 1>", "reasoning": "<brief reasoning for how well the response satisfies this criterion>", "score": <1-10score>},
{"index": 2, "criterion": "<exact criterion item 2>", "reasoning": "<brief reasoning for how well the response satisfies this criterion>", "score": <1-10score>},
...
]}

[Inputs]
[User's General Preference]: {{gp}}
[Current User Query] : {{query}}
[Candidate Model response]: {{response}}
[Personalized Checklist]:
{{checklist}}

[Output]
[Verify Result] (Json format):
)";

inline const char* const kRefineText =
    R"([Instruction]
Your task is to rewrite the provided [Initial Model Response] so that it fully addresses the [User Query], while better fitting the target user's preferences and needs.

You are given:
1. [User Query]
2. [Initial Model Response]
3. A [Personalized Checklist] that describes what the response should do or improve.

Use the checklist as feedback: incorporate relevant criteria while preserving correct and helpful content.
Do NOT explicitly mention the checklist, or describe your reasoning process in the final [Rewritten Personalized Response].
Make the final response tailored to the user.

[Inputs]
[User Query] : {{query}}
[Initial Model Response]: {{response}}
[Personalized Checklist]:
{{checklist}}

[Output]
[Rewritten Personalized Response] (your revised version of [Initial Model Response] text here only):
)";

inline const char* const kRespondText =
    R"([Instruction]
You are answering a query for a specific user. The [User's General Preference] describes what this user values in a response: content, tone, reasoning style and structure.
Write the response this user would most prefer. Output only the response text.

[Inputs]
[User's General Preference]: {{gp}}
[User Query]: {{query}}

[Output]
[Response]:
)";

inline const char* const kInferChecklistText =
    R"([Instruction]
You are a rigorous personalization checklist designer.
##Goal
Given a [User's General Preference] (GP) and a [Current User Query] (Q), generate a compact but expressive [Personalized Checklist] that can verify whether any candidate response is personalized for this user on this GP and Q.

##Requirements
- State the evidence from GP and Q -> facet -> checklist criterion.
- Each criterion should capture a specific personalization aspect (tone, reasoning style, value emphasis, level of concreteness, etc.).
- Tag each criterion with its importance for this user: Essential, Important or Optional.
- Output one criterion per line, exactly in this format and nothing else:
- [Essential|Important|Optional] <criterion> | evidence: <evidence from GP and/or Q>

{{examples}}

[Inputs]
[User's General Preference]: {{gp}}
[Current User Query] : {{query}}

[Output]
[Personalized Checklist]:
)";

inline const char* const kGenerateChecklistText =
    R"([User's General Preference]: {{gp}}
[Current User Query]: {{query}}
[Personalized Checklist]:
)";

}  // namespace detail

/// Looks up a shipped template; throws ValidationError for unknown ids.
inline const PromptTemplate& prompt_template(std::string_view id) {
  static const std::map<std::string, PromptTemplate, std::less<>> kTemplates = [] {
    std::map<std::string, PromptTemplate, std::less<>> m;
    const auto add = [&m](std::string_view id, const char* text) {
      m.emplace(std::string(id), PromptTemplate{std::string(id), text});
    };
    add(prompt_id::kSummarize, detail::kSummarizeText);
    add(prompt_id::kCollect, detail::kCollectText);
    add(prompt_id::kJudge, detail::kJudgeText);
    add(prompt_id::kRefine, detail::kRefineText);
    add(prompt_id::kRespond, detail::kRespondText);
    add(prompt_id::kInferChecklist, detail::kInferChecklistText);
    add(prompt_id::kGenerateChecklist, detail::kGenerateChecklistText);
    return m;
  }();
  const auto it = kTemplates.find(id);
  if (it == kTemplates.end()) {
    throw ValidationError("unknown prompt template '" + std::string(id) + "'");
  }
  return it->second;
}

// Renderers for structured values that fill slots.

inline std::string render_history(const std::vector<HistoryItem>& history) {
  std::string out;
  for (std::size_t i = 0; i < history.size(); ++i) {
    out += "\n### Interaction " + std::to_string(i + 1) + "\n";
    out += "[Query]: " + history[i].query + "\n";
    out += "[Chosen Model Response]: " + history[i].chosen + "\n";
    out += "[Rejected Model Response]: " + history[i].rejected + "\n";
  }
  return out;
}

/// Numbered one-line-per-criterion listing, as the judge sees it.
inline std::string render_checklist_numbered(const Checklist& checklist) {
  std::string out;
  for (std::size_t i = 0; i < checklist.criteria.size(); ++i) {
    if (i > 0) out += "\n";
    out += std::to_string(i + 1) + ". " + single_line(checklist.criteria[i].text);
  }
  return out;
}

}  // namespace pcheck

#endif  // PCHECK_PROMPTS_HPP
