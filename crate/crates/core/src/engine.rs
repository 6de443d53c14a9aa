//! Rule engine: maintains the activated-rule set and the layered parameter
//! store from per-tick events, conditions and online commands.
//!
//! One call to [`Engine::step`] does, in order:
//!
//! 1. retire rules that were admitted and exited in the previous tick;
//! 2. remove active rules whose exit event is present;
//! 3. admit triggered rules in textual order when their conditions hold and
//!    their bindings do not conflict with an active rule or an online write;
//! 4. rebuild the rule overlays;
//! 5. apply online commands in arrival order.
//!
//! Removal runs before admission so that a rule handing a parameter over to
//! another on the same event (for example a low-beam rule ending on
//! `vehicle_no_longer_detected` while a high-beam rule starts on it) does not
//! register as a conflict.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::catalog::{action_binding, ActionEffect, ControlCommand, Effect, Catalog};
use crate::dsl::ast::{Program, Rule};
use crate::dsl::online::OnlineCommand;
use crate::params::{ParamKey, ParameterStore, Value};
use crate::scene::{eval_condition, EventSet, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveRule {
    pub name: String,
    pub activated_tick: u64,
    pub bindings: Vec<(ParamKey, Value)>,
    /// Admitted on a tick that also carried its exit event.
    #[serde(skip)]
    pub expiring: bool,
}

/// Why a rule left the active set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    ExitTrigger,
    OnlineOverride,
    Cleared,
    Revised,
}

/// Something the engine did or refused to do, recorded in the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "note", rename_all = "snake_case")]
pub enum Note {
    Activated { rule: String },
    Deactivated { rule: String, reason: RemovalReason },
    Rejected { rule: String, key: ParamKey, held_by: String },
    Online { command: String },
    Error { message: String },
}

pub struct Engine {
    program: Program,
    active: Vec<ActiveRule>,
    store: ParameterStore,
    controls: Vec<ControlCommand>,
    tick: u64,
    ops: u64,
}

const ONLINE: &str = "online";

type Resolved = (Vec<(ParamKey, Value)>, Vec<ControlCommand>);

impl Engine {
    pub fn new(program: Program, baseline: ParameterStore) -> Self {
        Engine {
            program,
            active: Vec::new(),
            store: baseline,
            controls: Vec::new(),
            tick: 0,
            ops: 0,
        }
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn params(&self) -> &ParameterStore {
        &self.store
    }

    pub fn active(&self) -> &[ActiveRule] {
        &self.active
    }

    pub fn active_names(&self) -> Vec<String> {
        self.active.iter().map(|a| a.name.clone()).collect()
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Elementary operations performed by the last [`Engine::step`].
    pub fn last_op_count(&self) -> u64 {
        self.ops
    }

    /// Control commands produced since the last call, in order.
    pub fn take_controls(&mut self) -> Vec<ControlCommand> {
        std::mem::take(&mut self.controls)
    }

    fn rebuild_overlays(&mut self) {
        let layers = self
            .active
            .iter()
            .map(|a| (a.name.clone(), a.bindings.iter().cloned().collect::<BTreeMap<_, _>>()))
            .collect();
        self.store.set_overlays(layers);
    }

    /// Who currently holds each key: active rules, then online writes on top.
    fn claims(&self) -> BTreeMap<ParamKey, (String, Value)> {
        let mut claims = BTreeMap::new();
        for a in &self.active {
            for (k, v) in &a.bindings {
                claims.insert(*k, (a.name.clone(), v.clone()));
            }
        }
        for (k, v) in self.store.online() {
            claims.insert(*k, (ONLINE.to_string(), v.clone()));
        }
        claims
    }

    fn remove_active(&mut self, name: &str, reason: RemovalReason, notes: &mut Vec<Note>) -> bool {
        let before = self.active.len();
        self.active.retain(|a| a.name != name);
        let removed = self.active.len() != before;
        if removed {
            notes.push(Note::Deactivated { rule: name.to_string(), reason });
        }
        removed
    }

    /// Resolve a rule's actions. Returns the bindings and any control commands.
    fn resolve(&self, rule: &Rule, ego_speed: f64) -> Result<Resolved, String> {
        let mut bindings = Vec::new();
        let mut controls = Vec::new();
        for call in &rule.actions {
            match action_binding(call, &self.store, ego_speed) {
                Ok(ActionEffect::Bind(b)) => bindings.extend(b),
                Ok(ActionEffect::Control(c)) => controls.push(c),
                Ok(ActionEffect::Meta) => return Err(format!("`{}` is only valid online", call.id)),
                Err(e) => return Err(format!("rule \"{}\": {e}", rule.name)),
            }
        }
        Ok((bindings, controls))
    }

    /// Advance one tick.
    pub fn step(&mut self, scene: &Scene, events: &EventSet, online: &[OnlineCommand]) -> Vec<Note> {
        let mut notes = Vec::new();
        self.ops = 0;

        // 1. rules that entered and exited on the previous tick
        let expiring: Vec<String> = self.active.iter().filter(|a| a.expiring).map(|a| a.name.clone()).collect();
        for name in expiring {
            self.remove_active(&name, RemovalReason::ExitTrigger, &mut notes);
        }

        // 2. exit triggers
        let mut exited = Vec::new();
        for rule in &self.program.rules {
            self.ops += 1;
            if let Some(exit) = &rule.exit_trigger {
                if events.contains(&exit.to_string()) && self.active.iter().any(|a| a.name == rule.name) {
                    exited.push(rule.name.clone());
                }
            }
        }
        for name in &exited {
            self.remove_active(name, RemovalReason::ExitTrigger, &mut notes);
        }
        self.rebuild_overlays();

        // 3. admission in textual order
        let mut claims = self.claims();
        let program = std::mem::take(&mut self.program);
        for rule in &program.rules {
            self.ops += 1;
            if !events.contains(&rule.trigger.to_string())
                || exited.contains(&rule.name)
                || self.active.iter().any(|a| a.name == rule.name)
            {
                continue;
            }
            let holds = rule.conditions.iter().all(|c| {
                self.ops += 1;
                eval_condition(&c.expr, c.negated, scene)
            });
            if !holds {
                continue;
            }
            let (bindings, controls) = match self.resolve(rule, scene.ego.speed) {
                Ok(r) => r,
                Err(message) => {
                    notes.push(Note::Error { message });
                    continue;
                }
            };
            self.ops += bindings.len() as u64;
            let clash = bindings.iter().find_map(|(k, v)| match claims.get(k) {
                Some((holder, held)) if held != v => Some((*k, holder.clone())),
                _ => None,
            });
            if let Some((key, held_by)) = clash {
                notes.push(Note::Rejected { rule: rule.name.clone(), key, held_by });
                continue;
            }
            for (k, v) in &bindings {
                claims.insert(*k, (rule.name.clone(), v.clone()));
            }
            let expiring = rule
                .exit_trigger
                .as_ref()
                .is_some_and(|e| events.contains(&e.to_string()));
            self.active.push(ActiveRule {
                name: rule.name.clone(),
                activated_tick: self.tick,
                bindings,
                expiring,
            });
            // later relative actions in the same tick see this rule's values
            self.rebuild_overlays();
            self.controls.extend(controls);
            notes.push(Note::Activated { rule: rule.name.clone() });
        }
        self.program = program;

        // 4. overlays
        self.rebuild_overlays();

        // 5. online commands
        for cmd in online {
            self.ops += 1;
            self.apply_online(cmd, scene.ego.speed, &mut notes);
        }

        self.tick += 1;
        notes
    }

    /// Deactivate every active rule that disagrees with an online write.
    fn enforce_online(&mut self, notes: &mut Vec<Note>) {
        let online = self.store.online().clone();
        let losers: Vec<String> = self
            .active
            .iter()
            .filter(|a| a.bindings.iter().any(|(k, v)| online.get(k).is_some_and(|o| o != v)))
            .map(|a| a.name.clone())
            .collect();
        for name in losers {
            self.remove_active(&name, RemovalReason::OnlineOverride, notes);
        }
        self.rebuild_overlays();
    }

    pub fn apply_online(&mut self, cmd: &OnlineCommand, ego_speed: f64, notes: &mut Vec<Note>) {
        notes.push(Note::Online { command: cmd.to_string() });
        match cmd {
            OnlineCommand::Action { call } => match action_binding(call, &self.store, ego_speed) {
                Ok(ActionEffect::Bind(bindings)) => {
                    for (k, v) in bindings {
                        self.store.set_online(k, v);
                    }
                    self.enforce_online(notes);
                }
                Ok(ActionEffect::Control(c)) => self.controls.push(c),
                Ok(ActionEffect::Meta) => notes.push(Note::Error {
                    message: format!("malformed rule-set command `{call}`"),
                }),
                Err(e) => notes.push(Note::Error { message: e.to_string() }),
            },
            OnlineCommand::AddRule { rule } => {
                if self.program.rule(&rule.name).is_some() {
                    notes.push(Note::Error {
                        message: format!("rule \"{}\" already exists", rule.name),
                    });
                } else {
                    self.program.rules.push(rule.clone());
                }
            }
            OnlineCommand::ClearRule { rule } => {
                let before = self.program.rules.len();
                self.program.rules.retain(|r| &r.name != rule);
                if self.program.rules.len() == before {
                    notes.push(Note::Error { message: format!("unknown rule \"{rule}\"") });
                } else {
                    self.remove_active(rule, RemovalReason::Cleared, notes);
                    self.rebuild_overlays();
                }
            }
            OnlineCommand::ReviseRule { rule, action, args } => self.revise(rule, action, args, ego_speed, notes),
            OnlineCommand::CancelSpeedControl => {
                self.controls.push(ControlCommand::CancelSpeed);
                let cat = Catalog::standard();
                let speed_keys: Vec<ParamKey> = cat
                    .actions()
                    .iter()
                    .filter(|a| a.category == crate::catalog::ActionCategory::Speed)
                    .flat_map(|a| a.keys())
                    .collect();
                for k in speed_keys {
                    self.store.clear_online(k);
                }
            }
            OnlineCommand::CancelManoeuvreControl => self.controls.push(ControlCommand::CancelManoeuvre),
        }
    }

    fn revise(
        &mut self,
        rule: &str,
        action: &str,
        args: &[crate::dsl::ast::Literal],
        ego_speed: f64,
        notes: &mut Vec<Note>,
    ) {
        let Some(idx) = self.program.rules.iter().position(|r| r.name == rule) else {
            notes.push(Note::Error { message: format!("unknown rule \"{rule}\"") });
            return;
        };
        let Some(call) = self.program.rules[idx].actions.iter_mut().find(|a| a.id == action) else {
            notes.push(Note::Error {
                message: format!("rule \"{rule}\" has no action `{action}`"),
            });
            return;
        };
        call.args = args.to_vec();
        let Some(pos) = self.active.iter().position(|a| a.name == rule) else {
            return;
        };
        // Rebind against the parameters as they would be without this rule.
        let entry = self.active.remove(pos);
        self.rebuild_overlays();
        let revised = self.program.rules[idx].clone();
        let resolved = self.resolve(&revised, ego_speed);
        let claims = self.claims();
        match resolved {
            Ok((bindings, _)) => {
                let clash = bindings
                    .iter()
                    .any(|(k, v)| claims.get(k).is_some_and(|(_, held)| held != v));
                if clash {
                    notes.push(Note::Deactivated { rule: rule.to_string(), reason: RemovalReason::Revised });
                } else {
                    self.active.insert(pos, ActiveRule { bindings, ..entry });
                }
            }
            Err(message) => {
                notes.push(Note::Error { message });
                notes.push(Note::Deactivated { rule: rule.to_string(), reason: RemovalReason::Revised });
            }
        }
        self.rebuild_overlays();
    }
}

/// Whether an action id writes parameters (as opposed to a manoeuvre or meta).
pub fn is_binding_action(id: &str) -> bool {
    Catalog::standard()
        .lookup_action(id)
        .is_ok_and(|a| !matches!(a.effect, Effect::Control(_) | Effect::Meta))
}
