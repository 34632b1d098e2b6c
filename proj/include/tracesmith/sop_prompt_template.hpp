#pragma once

#include <string_view>

namespace tracesmith {

/// Demonstration-to-SOP generator prompt. The three upper-case tokens on
/// their own lines are substituted by build_prompt; everything else is sent
/// byte for byte.
inline constexpr std::string_view kSopPromptTemplate = R"PROMPT(<role>
You are a professional operations manager whose expertise is to document Standard Operating Procedure (SOP) in a clear and precise manner.
This SOP will be used as a step-by-step instruction for an AI-powered browsing agent to complete similar tasks.
</role>

You are now given a demo of the operation procedure performed by a human associate for the following task described within <task_description> tags:
<task_description>
<INPUT_TASK_DESCRIPTION_EXAMPLE>
</task_description>

The demo peration procedure is recorded as a browser replay in .json format within the <browser_replay_in_json> tags:
<demo>
<browser_replay_in_json>
<TEXT_REPLAY>
</browser_replay_in_json>
</demo>

You are asked to compose an SOP which an AI-powered browsing agent can follow and complete similar tasks within the <task_for_sop> tags below:
<task_for_sop>
<INPUT_TASK_DESCRIPTION_GENERAL>
</task_for_sop>

Below is the requirement of what should be included in the SOP that you are going to compose:
<requirement>
1. For the first step in your SOP:
  - Use both website name and the exact URL in your instruction
2. For the second step and onwards in your SOP:
  - Look holistically at the demo and identify the intention and goal behind each browsing action and step recorded. 
  - Use the intention and purpose behind to guide your composition of SOP. 
  - If navigating to a specific website is a critical action to achieve the goal, always include the web page name and the exact URL of this navigatio action.
  - For other actions, e.g., mouse clicks, keyboard inputs, that are related to the task, include them as illustration examples in your instrcution.
3. Your SOP should only include the knowledge that can be drawn from the demo replay within <demo> tags. 
  - Do not come up with an SOP from your memory.
4. Exclude steps within <demo> tages that are unrelated to the task within <task_for_sop> tags. Examples of such steps are:
  - Steps related to solving CAPTCHA.
  - Steps related to close pop up windows.
  - Mouse clicks on non-interactable elements such as background, or plain text.
</requirement>

You should follow the formatting instructions below to provide an SOP as your final answer:
<format_instructions>
1. Using <sop> tags to include all contents below.
2. Restate the task description content within <task_for_sop> tags above, now using <task> tags.
3. <task_for_sop> may be a general version of the <demo> example. Please identify proper input parameters so that <task_for_sop> can be faithfully represented.
  - Format the input parameters as .json within <input_param> tags. E.g., {input_param_1: "Explanation"}.
  - If no input parameter needed, output an empty dict within <input_param> tags. I.e., {}.
4. Document your final SOP within <instructions-step-by-step> tags.
  - Only provide the instructions within <instructions-step-by-step> tags. No need to explain within <instructions-step-by-step> tags.
  - Use proper referece to the input parameters identified. E.g., using <INPUT_PARAMETER_1>
  - Using numbered points to organize your sop.
</format_instructions>
)PROMPT";

}  // namespace tracesmith
