//! Prompt template text. Slots are `{N}`; every other byte is sent verbatim.

/// Object presence sweep. `{0}`: object name.
pub const PRESENCE_QUERY: &str = r##"Do you see a(n) {0}?"##;

/// High-level plan. `{0}`: visible objects, `{1}`: goal, `{2}`: failure-history block.
pub const PLAN_GENERATE: &str = r##"A stationary robot arm is in a location where it sees the following list of objects:

{0}

The robot has the following goal: {1}

Propose high-level, abstract subtasks of what the robot needs to do to {1}. The plan can only use one object. 

For example, if the goal is to find a fork, one plan might be:

<thought>To find the fork, I will start by looking inside the drawer.</thought>
[start plan]
    >Open the drawer
    >Look inside the drawer 
    >Grab the fork 
[end plan]

Rules:
1. You have access to the following objects: {0}. Do not create new objects.
2. Generate a plan that interacts with only one object from the list at a time. Keep it as short as possible. Most plans should be under 5 steps.
3. Assume that every action is completed successfully.
4. Assume the first thing you try works.
5. Your plan should only propose one way of accomplishing the task.
6. The robot only has one arm and it cannot hold two things at a time. Remember that when you are deciding on the order of actions.
7. Enclose your thought process with a single pair of tag <thought> and </thought>
8. Enclose your plan with the a single pair of tag [start plan] and [end plan]

{2}"##;

/// Vision-vs-motion classification. `{0}`: action.
pub const CLASSIFY_ACTION: &str = r##"A robot was asked to do this action:
    > {0}
If the central verb is related to vision, answer yes."##;

/// Low-level motion plan. `{0}` objects, `{1}`/`{2}` modifiers, `{4}` procedure, `{5}` observations, `{6}` action.
pub const MOTION_PLAN: &str = r##"
We have a stationary robot arm and we want you to help plan how it should move to perform tasks using the following template:
[start of description]
The manipulator's palm should move close to {{CHOICE: {0}}}.{1}{2}
[end of description] 
Rules:
0. You cannot use one line twice!!!!
1. If you see phrases like [NUM: default_value], replace the entire phrase with a numerical value.
2. If you see phrases like {{CHOICE: choice1, choice2, ...}}, it means you should replace the entire phrase with one of the choices listed.
3. If you see [optional], it means you only add that line if necessary for the task, otherwise remove that line.
4. The environment contains {0}. Do not invent new objects not listed here.
5. I will tell you a behavior/skill/task that I want the manipulator to perform and you will provide the full plan, even if you may only need to change a few lines. Always start the description with [start of description] and end it with [end of description].
6. You can assume that the robot is capable of doing anything, even for the most challenging task.
7. Your plan should be as close to the provided template as possible. Do not include additional details.
8. Your plan should be as concise as possible. Do not include or make up unncessary tasks.
9. Each object can only be close to or far from one thing. 

This is the entire procedure:
{4}

These are the observations we have made so far:
{5}

Create a plan for the following action:
    > {6}"##;

/// Relocation question selecting the motion-plan modifier. `{0}`: action.
pub const RELOCATION_CHECK: &str = r##"A robot arm has to do this action:
    > {0}
Does this action necessarily involve relocating an object to a different location that does not involve the robot arm? Answer with yes or no."##;

/// Reward-program generation. `{0}` objects plus palm, `{1}` joints, `{2}` action, `{3}` motion plan.
pub const REWARD_CODE: &str = r##"We have a plan of a robot arm with palm to manipulate objects and we want you to turn that into the corresponding program with following functions:

    def minimize_l2_distance_reward(name_obj_A, name_obj_B)

where name_obj_A and name_obj_B are selected from {0}. This term sets a reward for minimizing l2 distance between name_obj_A and name_obj_B so they get closer to each other. rest_position is the default position for the palm when it's holding in the air.

    def maximize_l2_distance_reward(name_obj_A, name_obj_B, distance=0.5)

This term encourages the orientation of name_obj to be close to the target (specified by x_axis_rotation_radians).

    def execute_plan(duration=2)

This function sends the parameters to the robot and execute the plan for "duration" seconds, default to be 2.

    def set_joint_fraction_reward(name_joint, fraction)

This function sets the joint to a certain value between 0 and 1. 0 means close and 1 means open. name_joint needs to be select from {1}.

    def reset_reward()

This function resets the reward to default values.
Example plan: To perform this task, the manipulator's palm should move close to object1=faucet_handle. object1 needs to be lifted to a height of 1.0.
This is the first plan for a new task.
Example answer code:

    import numpy as np

    reset_reward()
        # This is a new task so reset reward; otherwise we don't need it
    minimize_l2_distance_reward("palm", "faucet_handle")
    set_joint_fraction_reward("faucet", 1.0)

    execute_plan(4)

Remember:
1. Always format the code in code blocks. In your response execute_plan should be called exactly once at the end.
2. Do not invent new functions or classes. The only allowed functions you can call are the ones listed above. Do not leave unimplemented code blocks in your response.
3. The only allowed library is numpy. Do not import or use any other library.
4. If you are not sure what value to use, just use your best judge. Do not use None for anything.
5. Do not calculate the position or direction of any object (except for the ones provided above). Just use a number directly based on your best guess.
6. You do not need to make the robot do extra things not mentioned in the plan such as stopping the robot.

The action to perform is {2} and the plan is:
{3}"##;

/// Maps one reward call onto a motion-plan step. `{0}`: motion plan, `{1}`: reward call.
pub const VERIFY_REWARD_STEP: &str = r##"This is a motion plan generated for a robot:

{0}

This is a reward function generated to complete one step in the motion plan:

{1}

The function minimize_l2_distance_reward() refers to bringing two objects close together.
The function maximize_l2_distance_reward() refers to moving two objects further apart.
The function set_joint_fraction_reward() refers to opening or closing an object (0 for closed, 1 for open)
The function set_obj_z_position_reward() specifies the target height of an object.
The function set_obj_orientation_reward() specifies the target rotation of an object.

Which step in the motion plan is the function referring to? Return the step using <step></step> tags. If it does not refer to any of them, return <step>-1</step>"##;

/// Selects the step that satisfies the action. `{0}`: action, `{1}`: motion plan.
pub const VERIFY_PRIMARY_STEP: &str = r##"A stationary robot arm was asked to do the following motion plan to complete the task '{0}':

{1} 

After which step in the motion plan will the task '{0}' be satisfied? First, explain your thought then answer the step number enclosed with the tag <step> and </step>. Opening a joint can also mean activating it depending on the context. You must select one. If you think none of the steps does, select the closest one."##;

/// Failure-diagnosis questions, one perceiver call each. `{0}`: action, `{1}`: objects.
pub const DIAGNOSIS_VARIANTS: [&str; 6] = [
    r##"A robot is in a simulation environment where it can interact with any object like in the real world. The robot would like to {0} but it cannot. Is there something in this scene preventing that, other than the robot? Assume the robot can interact with anything. These are the names of the objects in our scene: {1}"##,
    r##"In a simulation, a robot wants to {0} but can't. Is anything else, besides the robot, blocking it? Check the objects in the scene: {1}."##,
    r##"Robot in a simulation wants to {0}, can't. Something else stopping it? Objects in scene: {1}."##,
    r##"A robot can engage with any item. It wants to {0} but can't. Is an object in this scene, apart from the robot, hindering it? Objects present: {1}"##,
    r##"I would like to {0} but I cannot. Is there something in this scene preventing that, other than the robot? These are the objects in the scene: {1}"##,
    r##"I would like to {0} but I am unable to. Is there something in this scene preventing me from doing that? Ignore the robot. These are the names of the objects: {1}"##,
];

/// Off-vocabulary detection. `{0}`: objects, `{1}`: sentence.
pub const REMAP_DETECT: &str = r##"We have access to the following objects in our scene: {0}

You are given a sentence describing an image of the scene, but it may have gotten the names of the objects wrong. Does this sentence contain objects that are not in our scene or get the names of the objects wrong? Start your answer with yes or no.

{1}"##;

/// Rewrite onto scene vocabulary. `{0}`: objects, `{1}`: sentence.
pub const REMAP_REWRITE: &str = r##"We have access to the following objects in our scene: {0}

You are given a sentence describing an image of the scene, but got the names of the objects wrong. Rewrite this sentence using the closest object(s) in our environment: 

{1}

Rules:
You can only use objects in the scene. Use your best judgement."##;

/// Consolidates the perceiver explanations. `{0}`: action, `{1}`: explanations.
pub const DIAGNOSIS_SUMMARY: &str = r##"The stationary robot arm would like to {0} but it cannot. Here are possible reasons why based on images of the scene:

    {1}

Based on the above explanations, what are the top reason(s) why the robot cannot {0}? List each reason on a separate line, enclosed with the tag <reason> </reason>. Provide up to two reasons. Be as succinct as possible. You must not include any reasons related to the robot, only reasons related to objects in the scene."##;

pub const HISTORY_HEADER: &str = r##"One or more previous attempts failed. Below are the details."##;

pub const ATTEMPT_RULE_LEFT: &str = r##"---------------------------------- attempt #"##;
pub const ATTEMPT_RULE_RIGHT: &str = r##" ----------------------------------"##;

/// Action-level failure entry. `{0}`: plan step, `{1}`: attempted action, `{2}`: diagnosed reason.
pub const ACTION_FAILURE_ENTRY: &str = r##"This attempt failed when executing '{0}'.The plan failed because the robot was not able to execute this action: '{1}'. This was identified as a possible reason the action failed: '{2}'."##;

pub const HISTORY_FOOTER: &str = r##"---------------------------- end of failed attempts ----------------------------"##;
pub const HISTORY_REMINDER: &str = r##"Reminder to propose a different plan than the above failed attempts."##;

/// Plan-level failure entry. `{0}`: thought, `{1}`: plan steps, `{2}`: reason.
pub const PLAN_FAILURE_ENTRY: &str = r##"The proposed plan was:
<thought>{0}</thought>
[start plan]
{1}
[end plan]
The plan failed because {2}. "##;

/// Perceiver question generation. `{0}` goal, `{1}` plan, `{2}` action, `{3}` observed objects.
pub const QUESTION_GENERATE: &str = r##"You are a robot in the process of executing this plan, with the overall goal to '{0}':

{1}

You are currently performing this action: '{2}'. You have access to a perception model that can answer your questions related to vision. 

{3}

What question do you want to ask the perception model in order to get the answer to '{2}'? You can ask up to two questions. You don't have to ask if the information is already sufficient. Avoid asking the vision model to compare things. Enclose each of your questions with the tag <question> </question>."##;

/// Question category. `{0}`: question.
pub const QUESTION_TYPE: &str = r##"What type of question is this asking perception model: '{0}'? Choose your answer from [OBJECT_PRESENCE, OBJECT_ATTRIBUTE, NEITHER]"##;

/// Perceiver state query. `{2}`: question, `{0}`: objects, `{1}`: context.
pub const STATE_QUERY: &str = r##"{2} The names of the objects in our scene are: {0}. {1} "##;

/// Action completion check. `{0}` plan, `{1}` action, `{2}` Q/A pairs.
pub const COMPLETION_CHECK: &str = r##"A robot was tasked to do this plan: 

{0}

The robot is currently doing this action: '{1}'.

To do the action, the robot asked a perception model the following questions (Q) and got the answers (A):

{2}

After receiving this answer, has the robot completed the action '{1}'?  Begin your answer with yes or no. If your answer begins with no, write the remaining action that needs to be completed using <Action></Action> tags."##;
