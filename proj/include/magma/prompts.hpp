#pragma once

// Prompt construction for the four reasoning operations. Templates are plain
// data; both real HTTP providers and the deterministic mocks receive exactly
// these rendered strings, so tests exercise the same surface production uses.

#include <string>
#include <vector>

#include "core.hpp"

namespace magma {

struct Prompt {
  std::string system;
  std::string user;
};

// ------------------------------------------------------------- extraction ---

inline Prompt build_extractor_prompt(const std::string& speaker, const std::string& text,
                                     const std::string& prev_summary) {
  Prompt p;
  p.system =
      "You are an automated Graph Memory Parser. Your task is to extract structured "
      "metadata from raw conversational logs to build a knowledge graph.\n"
      "\n"
      "Instructions:\n"
      "Analyze the input and return ONLY a valid JSON object matching the specific schema "
      "below. Do not include markdown formatting.\n"
      "\n"
      "Target Schema:\n"
      "- \"entities\": List of proper nouns (People, Locations, Organizations).\n"
      "- \"topic\": String (1-3 words representing the main theme).\n"
      "- \"relationships\": List of strings describing interactions (e.g., \"X researches "
      "Y\").\n"
      "- \"semantic_facts\": List of atomic facts preserving key information.\n"
      "- \"dates_mentioned\": List of temporal strings (e.g., \"next Friday\", "
      "\"2024-01-01\").\n"
      "- \"summary\": One-sentence summary preserving speaker attribution.\n";
  p.user = "Input Data:\n- Speaker: " + speaker + "\n- Text: " + text +
           "\n- Context: " + prev_summary + "\n";
  return p;
}

// ---------------------------------------------------------------- answers ---

// Per-intent reasoning instruction appended to the QA prompt.
inline std::string dynamic_instruction(IntentLabel intent) {
  switch (intent) {
    case IntentLabel::Why:
      return "Connect related facts across different nodes. For comparison queries (e.g., "
             "'both/all'), identify commonalities between entities rather than listing "
             "individual details.";
    case IntentLabel::When:
      return "Resolve relative dates (e.g., 'yesterday') using the event timestamps. Output "
             "dates strictly in 'D Month YYYY' format. Calculate durations if asked.";
    case IntentLabel::Entity:
      return "Extract the specific entity, name, or method requested. Do not add "
             "explanations. Return the exact fact matching the query intent.";
    case IntentLabel::General:
      return "Make reasonable inferences based on the user's personality traits, interests, "
             "and past behaviors. Support hypothetical ('would/could') reasoning with "
             "evidence.";
  }
  return {};
}

inline Prompt build_qa_prompt(const std::string& question, const std::string& context,
                              IntentLabel intent) {
  Prompt p;
  p.system =
      "You are a precision QA assistant operating on retrieved memory contexts. Your goal "
      "is to answer the user's question accurately using only the provided information.";
  p.user = "Context:\n" + context +
           "\n\n"
           "Current Query:\n"
           "- Question: " +
           question +
           "\n"
           "- Constraints: " +
           to_string(intent) +
           "\n\n"
           "Instructions:\n"
           "1. Use ONLY information explicitly stated in the context.\n"
           "2. If the answer is not present, respond exactly with \"Information not "
           "found\".\n"
           "3. Be concise (typically 1-10 words) unless detailed reasoning is required.\n"
           "4. " +
           dynamic_instruction(intent) +
           "\n"
           "\n"
           "Answer:";
  return p;
}

// ----------------------------------------------------------------- judging ---

inline Prompt build_judge_prompt(const std::string& question, const std::string& gold,
                                 const std::string& candidate) {
  Prompt p;
  p.system =
      "You are an expert evaluator assessing the semantic fidelity of a memory retrieval "
      "system. Score the Candidate Answer against the Gold Reference on a continuous scale "
      "[0.0, 1.0].\n"
      "\n"
      "Scoring Rubric:\n"
      "- 1.0 (Exact Alignment): Captures all key entities, temporal markers, and causal "
      "relationships. Semantically equivalent.\n"
      "- 0.8 (Substantially Correct): Main point is accurate but lacks minor nuances or "
      "secondary details.\n"
      "- 0.6 (Partial Match): Contains valid information but misses key constraints (e.g., "
      "wrong date but correct event).\n"
      "- 0.4 (Tangential): Touches on the topic but misses the core information "
      "requirement.\n"
      "- 0.2 (Incoherent): Factually incorrect with only minimal topical overlap.\n"
      "- 0.0 (Contradiction/Hallucination): Completely unrelated or contradicts the ground "
      "truth.\n"
      "\n"
      "Evaluation Constraints:\n"
      "1. Temporal Flexibility: Accept relative time references (e.g., \"next Tuesday\") if "
      "they resolve to the same period as the Gold Reference.\n"
      "2. Semantic Equivalence: Prioritize informational content over lexical matching.\n"
      "3. Adversarial Handling: If the Gold Reference states \"Unanswerable\", the "
      "Candidate MUST explicitly state lack of information. Any hallucinated fact results "
      "in 0.0.\n";
  p.user = "Input: Question: " + question + " | Gold: " + gold + " | Candidate: " + candidate +
           "\nOutput: JSON {\"score\": float, \"reasoning\": \"concise explanation\"}";
  return p;
}

// ----------------------------------------------------- causal consolidation ---

// `events` are pre-serialized "[id] (timestamp) content" lines; `history` is
// the capped list of episode summaries giving the reasoner narrative context.
inline Prompt build_causal_prompt(const std::vector<std::string>& events,
                                  const std::vector<std::string>& history) {
  Prompt p;
  p.system =
      "You are a causal analysis engine for a conversational memory graph. Given a set of "
      "event records, identify pairs where one event plausibly caused, enabled, or "
      "motivated the other.\n"
      "\n"
      "Instructions:\n"
      "Return ONLY a valid JSON object of the form {\"causal_pairs\": [{\"src\": \"event "
      "id\", \"dst\": \"event id\", \"confidence\": float in [0,1], \"rationale\": \"short "
      "phrase\"}]}. Use only ids present in the event list. Report a pair only when the "
      "causal link is stated or strongly implied; confidence below 0.5 means speculative. "
      "Do not include markdown formatting.";
  std::string u = "Events:\n";
  for (const auto& line : events) u += line + "\n";
  u += "\nEpisode history:\n";
  for (const auto& line : history) u += "- " + line + "\n";
  p.user = std::move(u);
  return p;
}

}  // namespace magma
