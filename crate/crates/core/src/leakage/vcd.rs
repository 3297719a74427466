//! Value-change-dump export of a switching log (IEEE 1364 text subset).
//!
//! Timescale is 1 ps. One vector variable per activity component, plus the
//! 1-bit trigger, the CPU frequency in kHz, and a 64-bit cycle counter so
//! that window spans can be recovered in cycles from the waveform alone.
//! Values are dumped only when they change; timestamps are the cumulative
//! wall time of the variable-frequency cycles.

use std::io::{self, Write};

use super::SwitchingLog;

struct Var {
    id: char,
    name: &'static str,
    width: u32,
}

const VARS: [Var; 7] = [
    Var {
        id: 'r',
        name: "regfile_hd",
        width: 6,
    },
    Var {
        id: 'a',
        name: "alu_hw",
        width: 6,
    },
    Var {
        id: 'd',
        name: "dbus_hw",
        width: 6,
    },
    Var {
        id: 'p',
        name: "pc_hd",
        width: 6,
    },
    Var {
        id: 'f',
        name: "freq_khz",
        width: 32,
    },
    Var {
        id: 'c',
        name: "cycle",
        width: 64,
    },
    Var {
        id: 't',
        name: "trigger",
        width: 1,
    },
];

fn bin(value: u64, width: u32) -> String {
    let mut s = String::with_capacity(width as usize);
    for i in (0..width).rev() {
        s.push(if value >> i & 1 == 1 { '1' } else { '0' });
    }
    s
}

fn frame_values(f: &super::ActivityFrame) -> [u64; 7] {
    [
        u64::from(f.regfile_hd),
        u64::from(f.alu_hw),
        u64::from(f.dbus_hw),
        u64::from(f.pc_hd),
        (f.freq_mhz * 1000.0).round() as u64,
        f.cycle,
        u64::from(f.trigger),
    ]
}

fn write_change(out: &mut impl Write, var: &Var, value: u64) -> io::Result<()> {
    if var.width == 1 {
        writeln!(out, "{}{}", value, var.id)
    } else {
        writeln!(out, "b{} {}", bin(value, var.width), var.id)
    }
}

/// Writes the log as VCD text.
pub fn write_vcd(log: &SwitchingLog, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "$version voltlab $end")?;
    writeln!(out, "$timescale 1ps $end")?;
    writeln!(out, "$scope module soc $end")?;
    for v in &VARS {
        writeln!(out, "$var wire {} {} {} $end", v.width, v.id, v.name)?;
    }
    writeln!(out, "$upscope $end")?;
    writeln!(out, "$enddefinitions $end")?;

    writeln!(out, "#0")?;
    writeln!(out, "$dumpvars")?;
    let mut current: [u64; 7] = match log.frames.first() {
        Some(f) => frame_values(f),
        None => [0; 7],
    };
    for (v, &val) in VARS.iter().zip(current.iter()) {
        write_change(out, v, val)?;
    }
    writeln!(out, "$end")?;

    let mut time_ps = 0.0f64;
    for (i, frame) in log.frames.iter().enumerate() {
        if i > 0 {
            let values = frame_values(frame);
            let changed: Vec<usize> = (0..7).filter(|&k| values[k] != current[k]).collect();
            if !changed.is_empty() {
                writeln!(out, "#{}", time_ps.round() as u64)?;
                for k in changed {
                    write_change(out, &VARS[k], values[k])?;
                    current[k] = values[k];
                }
            }
        }
        time_ps += frame.duration_ns() * 1000.0;
    }
    // closing timestamp marks the end of the recording
    writeln!(out, "#{}", time_ps.round() as u64)?;
    Ok(())
}

/// Parses a VCD produced by [`write_vcd`] back into a switching log.
/// Used by the analyze phase to recover activity series for leakage
/// localization when only the waveform files are on disk.
pub fn read_vcd(text: &str) -> Option<SwitchingLog> {
    use std::collections::HashMap;
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut lines = text.lines();
    for line in lines.by_ref() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("$var wire ") {
            // "<width> <id> <name> $end"
            let mut parts = rest.split_whitespace();
            let _width = parts.next()?;
            let id = parts.next()?.to_string();
            let name = parts.next()?;
            if let Some(k) = VARS.iter().position(|v| v.name == name) {
                ids.insert(id, k);
            }
        }
        if t == "$enddefinitions $end" {
            break;
        }
    }
    let mut current = [0u64; 7];
    let mut events: Vec<(u64, [u64; 7])> = Vec::new();
    let mut time = 0u64;
    for line in lines {
        let t = line.trim();
        if t.is_empty() || t.starts_with('$') {
            continue;
        }
        if let Some(stamp) = t.strip_prefix('#') {
            events.push((time, current));
            time = stamp.parse().ok()?;
        } else if let Some(rest) = t.strip_prefix('b') {
            let (bits, id) = rest.split_once(' ')?;
            let k = *ids.get(id.trim())?;
            current[k] = u64::from_str_radix(bits, 2).ok()?;
        } else {
            // scalar: value char followed by the id
            let (v, id) = t.split_at(1);
            let k = *ids.get(id.trim())?;
            current[k] = v.parse().ok()?;
        }
    }
    events.push((time, current));
    // Events bracket the frame states: event i holds the values valid from
    // its timestamp until the next one; expand into per-cycle frames.
    let mut frames = Vec::new();
    let mut rise = None;
    let mut fall = None;
    let mut start_cycle = None;
    let mut prev_trigger = None;
    for w in events.windows(2) {
        let (t0, vals) = w[0];
        let (t1, _) = w[1];
        if t1 <= t0 && !frames.is_empty() {
            continue;
        }
        let freq_mhz = vals[4] as f64 / 1000.0;
        if freq_mhz <= 0.0 {
            continue;
        }
        let cycle_ps = 1.0e6 / freq_mhz;
        let n = (((t1 - t0) as f64) / cycle_ps).round() as u64;
        let base = vals[5];
        if start_cycle.is_none() {
            start_cycle = Some(base);
        }
        let trig = vals[6] != 0;
        if prev_trigger != Some(trig) {
            let mark = TriggerMark {
                cycle: base,
                time_ns: t0 as f64 / 1000.0,
            };
            if trig {
                rise = Some(mark);
            } else if prev_trigger.is_some() {
                fall = Some(mark);
            }
            prev_trigger = Some(trig);
        }
        for i in 0..n {
            frames.push(ActivityFrame {
                cycle: base + i,
                freq_mhz,
                regfile_hd: if i == 0 { vals[0] as u8 } else { 0 },
                alu_hw: if i == 0 { vals[1] as u8 } else { 0 },
                dbus_hw: if i == 0 { vals[2] as u8 } else { 0 },
                pc_hd: if i == 0 { vals[3] as u8 } else { 0 },
                trigger: trig,
            });
        }
    }
    Some(SwitchingLog {
        frames,
        trigger_rise: rise,
        trigger_fall: fall,
        start_cycle: start_cycle.unwrap_or(0),
    })
}

use super::{ActivityFrame, TriggerMark};
