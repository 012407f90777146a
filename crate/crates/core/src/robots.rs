//! Robots-exclusion policy: lenient parser plus the original REP matching
//! rules (longest path prefix wins, allow wins ties, `*` wildcards and `$`
//! end anchors supported).

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Directive {
    Allow,
    Disallow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RobotsRule {
    /// Lowercased user-agent token of the group this rule belongs to;
    /// `*` matches every agent.
    pub agent_pattern: String,
    pub directive: Directive,
    pub path_prefix: String,
}

/// Parsed robots.txt. Evaluation is pure: the same (policy, agent, path)
/// triple always yields the same verdict.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RobotsPolicy {
    pub rules: Vec<RobotsRule>,
    pub crawl_delay_s: Option<f64>,
}

/// Parses robots.txt contents. Never fails: unparseable lines are skipped
/// and an empty or garbage file degrades to a fully permissive policy.
pub fn parse_robots(text: &str) -> RobotsPolicy {
    let mut policy = RobotsPolicy::default();
    // Agents of the group currently being filled. Consecutive `User-agent`
    // lines accumulate; the first rule line freezes the set.
    let mut group_agents: Vec<String> = Vec::new();
    let mut group_open = false;

    for raw in text.lines() {
        let line = match raw.split_once('#') {
            Some((before, _)) => before.trim(),
            None => raw.trim(),
        };
        if line.is_empty() {
            continue;
        }
        let Some((field, value)) = line.split_once(':') else {
            continue;
        };
        let field = field.trim().to_ascii_lowercase();
        let value = value.trim();
        match field.as_str() {
            "user-agent" | "useragent" => {
                if !group_open {
                    group_agents.clear();
                    group_open = true;
                }
                if !value.is_empty() {
                    group_agents.push(value.to_ascii_lowercase());
                }
            }
            "allow" | "disallow" => {
                group_open = false;
                if value.is_empty() {
                    // An empty Disallow means "allow everything": no rule.
                    continue;
                }
                let agents: &[String] = if group_agents.is_empty() {
                    &[]
                } else {
                    &group_agents
                };
                let directive = if field == "allow" {
                    Directive::Allow
                } else {
                    Directive::Disallow
                };
                if agents.is_empty() {
                    // Rules before any User-agent line apply to everyone.
                    policy.rules.push(RobotsRule {
                        agent_pattern: "*".into(),
                        directive,
                        path_prefix: value.to_string(),
                    });
                } else {
                    for agent in agents {
                        policy.rules.push(RobotsRule {
                            agent_pattern: agent.clone(),
                            directive,
                            path_prefix: value.to_string(),
                        });
                    }
                }
            }
            "crawl-delay" => {
                group_open = false;
                if let Ok(delay) = value.parse::<f64>() {
                    if delay.is_finite() && delay >= 0.0 {
                        // Keep the most conservative delay seen.
                        policy.crawl_delay_s = Some(match policy.crawl_delay_s {
                            Some(prev) => prev.max(delay),
                            None => delay,
                        });
                    }
                }
            }
            _ => {}
        }
    }
    policy
}

/// Does `pattern` (REP path pattern with `*` wildcards and optional trailing
/// `$` anchor) match `path` starting at its beginning?
fn pattern_matches(pattern: &str, path: &str) -> bool {
    let (pattern, anchored) = match pattern.strip_suffix('$') {
        Some(p) => (p, true),
        None => (pattern, false),
    };
    let pat: Vec<u8> = pattern.bytes().collect();
    let txt: Vec<u8> = path.bytes().collect();

    // Iterative wildcard match with backtracking over the last `*`.
    let (mut p, mut t) = (0usize, 0usize);
    let (mut star, mut star_t) = (None::<usize>, 0usize);
    loop {
        if p < pat.len() && pat[p] == b'*' {
            star = Some(p);
            star_t = t;
            p += 1;
        } else if t < txt.len() && p < pat.len() && pat[p] == txt[t] {
            p += 1;
            t += 1;
        } else if let Some(sp) = star {
            if star_t < txt.len() {
                star_t += 1;
                t = star_t;
                p = sp + 1;
            } else {
                break;
            }
        } else {
            break;
        }
        if p == pat.len() {
            if !anchored || t == txt.len() {
                return true;
            }
            // Anchored and text remains: force backtrack if possible.
            if let Some(sp) = star {
                if star_t < txt.len() {
                    star_t += 1;
                    t = star_t;
                    p = sp + 1;
                    continue;
                }
            }
            break;
        }
    }
    p == pat.len() && (!anchored || t == txt.len())
}

fn agent_matches(pattern: &str, agent_lower: &str) -> bool {
    pattern == "*" || agent_lower.contains(pattern)
}

/// Evaluates the policy for one request. The most specific matching group
/// applies (exact agent over `*`); within it the longest matching path
/// pattern decides, with Allow winning ties at equal length. No applicable
/// rule means allowed.
pub fn is_allowed(policy: &RobotsPolicy, agent: &str, path: &str) -> bool {
    let agent_lower = agent.to_ascii_lowercase();
    let specific: Vec<&RobotsRule> = policy
        .rules
        .iter()
        .filter(|r| r.agent_pattern != "*" && agent_matches(&r.agent_pattern, &agent_lower))
        .collect();
    let applicable: Vec<&RobotsRule> = if specific.is_empty() {
        policy.rules.iter().filter(|r| r.agent_pattern == "*").collect()
    } else {
        specific
    };

    let mut best: Option<(usize, Directive)> = None;
    for rule in applicable {
        if !pattern_matches(&rule.path_prefix, path) {
            continue;
        }
        let len = rule.path_prefix.trim_end_matches('$').len();
        best = match best {
            None => Some((len, rule.directive)),
            Some((blen, bdir)) => {
                if len > blen || (len == blen && rule.directive == Directive::Allow) {
                    Some((len, rule.directive))
                } else {
                    Some((blen, bdir))
                }
            }
        };
    }
    match best {
        Some((_, Directive::Disallow)) => false,
        _ => true,
    }
}
