#include <cstdio>

#include "templar/gateway.hpp"
#include "templar/json_io.hpp"

namespace templar {

std::string format_metric(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", value);
    std::string s(buf);
    while (s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
    return s;
}

std::string render_construction_prompt(const std::string& problem,
                                       const std::optional<std::string>& solution,
                                       const std::string& answer) {
    std::string out =
        "You are an expert in reasoning strategies. Given a complex, multi-step problem, its "
        "complete solution, and the final answer, extract a structured problem-solving template "
        "composed of reusable sub-templates. Return the result in JSON format with the following "
        "structure:\n"
        "\n"
        "1. A clear name for the strategy (template_name)\n"
        "2. A brief description of the method (description)\n"
        "3. A step-by-step reasoning flow to solve similar problems (reason_flow)\n"
        "4. An example application, including:\n"
        "   - Problem statement (example_problem)\n"
        "   - Solution steps (solution_steps)\n"
        "   - Final answer (final_answer)\n"
        "5. sub_templates: A list of dictionaries, each representing a reasoning sub-template "
        "with:\n"
        "   - template_name: A descriptive name for this sub-strategy\n"
        "   - description: A brief description of the sub-strategy\n"
        "   - reason_flow: A list of reasoning steps involved in this sub-task\n"
        "   - example: An example application of this sub-template, including:\n"
        "     - example_problem: A question matching this reasoning pattern\n"
        "     - solution_steps: Step-by-step solution to that question\n"
        "     - final_answer: The answer to that question\n"
        "\n"
        "Respond only in JSON format with no explanation.\n"
        "\n";
    out += "Problem:\n\"\"\" " + problem + " \"\"\"\n\n";
    out += "Solution:\n\"\"\" " + solution.value_or("(not provided)") + " \"\"\"\n\n";
    out += "Final Answer:\n\"\"\" " + answer + " \"\"\"\n";
    return out;
}

namespace {

std::string failed_cases_block(const std::vector<FailedCase>& failed_cases) {
    std::string out;
    for (size_t i = 0; i < failed_cases.size(); ++i) {
        const FailedCase& c = failed_cases[i];
        if (i > 0) out += "\n";
        out += "Case #" + std::to_string(i) + " (F1: " + format_metric(c.metric) + ")\n";
        out += "Query: " + c.query + "\n";
        out += "REASONING TRACE: " + c.trace + "\n";
        out += "Gold: " + c.gold + "\n";
        out += "Pred: " + c.prediction + "\n";
    }
    return out;
}

std::string source_block(const SourceCase& source) {
    return "Query: " + source.problem + "\nSolution Steps:\n" + source.solution_block +
           "\nFinal Answer: " + source.answer + "\n";
}

}  // namespace

std::string render_feedback_prompt(const ThoughtTemplate& t,
                                   const std::vector<FailedCase>& failed_cases,
                                   const SourceCase& source) {
    std::string out = "Role. You are improving a reasoning template where it was applied.\n\n";
    out += "Current Template.\n" + template_to_json(t).dump(2) + "\n\n";
    out += "Failed Cases where this template was used.\n" + failed_cases_block(failed_cases);
    out += "\nFailed Case Source (original query/solution/answer).\n" + source_block(source);
    out +=
        "\nYour task. Analyze the template's role in the prediction error:\n"
        "- How the template led to the incorrect prediction\n"
        "- What needs to be fixed in the template\n"
        "- Specific feedback to get the correct answer\n"
        "\n"
        "Decision Guide (choose exactly one at the end).\n"
        "- FIX: Template needs revision to address the issues above\n"
        "- DISCARD: Template is fundamentally incorrect\n"
        "- KEEP: Template works perfectly AND failure is due to external factors (e.g., answer "
        "format)\n"
        "- ADD: Template works perfectly BUT failure is due to system coordination issues (e.g., "
        "selection, multi-step integration)\n"
        "\n"
        "Output format.\n"
        "- Return bullets only for your analysis.\n"
        "- On the FINAL LINE, output exactly one of: **FIX** or **DISCARD** or **ADD** or "
        "**KEEP**.\n";
    return out;
}

std::string render_edit_prompt(const ThoughtTemplate& t,
                               const std::vector<FailedCase>& failed_cases,
                               const SourceCase& source, const std::string& feedback_text) {
    std::string out =
        "Role. You will edit a reasoning template based on the FEEDBACK.\n"
        "\n"
        "Output constraints.\n"
        "- Return ONLY a valid JSON object matching the SCHEMA below.\n"
        "- No markdown, no extra text. Use double quotes for all keys/strings.\n"
        "\n"
        "SCHEMA.\n"
        "{\n"
        "  \"template_id\": \"string\",\n"
        "  \"template_name\": \"string\",\n"
        "  \"description\": \"string\",\n"
        "  \"reason_flow\": [\"string\", \"...\"],\n"
        "  \"example\": {\n"
        "    \"example_problem\": \"string\",\n"
        "    \"solution_steps\": [\"string\", \"...\"],\n"
        "    \"final_answer\": \"string\"\n"
        "  }\n"
        "}\n"
        "\n";
    out += "Current Template.\n" + template_to_json(t).dump(2) + "\n\n";
    out += "Failed Cases (referenced in feedback).\n" + failed_cases_block(failed_cases);
    out += "\nFailed Case Source (original query/solution/answer).\n" + source_block(source);
    out += "\nFEEDBACK.\n" + feedback_text + "\n";
    out +=
        "\nInstruction. Revise the template to address the FEEDBACK while preserving reusable "
        "structure and staying within the SCHEMA. Respond only with the JSON object.\n";
    return out;
}

}  // namespace templar
