//! Text formats for instances and placements, plus atomic file output.
//!
//! Instance file:
//!
//! ```text
//! lvmp,<V>,<L>,<count_1>,...,<count_L>
//! ps,<type_id>,<name>,<cpu>,<ram>,<disk>,<cost>
//! <vm_index>,<type_id>,<cpu>,<ram>,<disk>
//! ```
//!
//! Placement file:
//!
//! ```text
//! placement,<instance_hash>,<solver>,<seed>
//! <server_idx>,<ps_type_id>,<vm>;<vm>;...
//! ```
//!
//! Blank lines and lines starting with `#` are ignored by both parsers.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::domain::{ActivatedPs, Cost, Instance, Placement, PsType, Resources, VmType};
use crate::error::{Error, Result};

const INSTANCE_TAG: &str = "lvmp";
const PS_TAG: &str = "ps";
const PLACEMENT_TAG: &str = "placement";

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn field<T: FromStr>(raw: &str, what: &str, line: usize) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad {what} {raw:?}")))
}

fn expect_fields(line: &str, n: usize, lineno: usize) -> Result<Vec<&str>> {
    let parts: Vec<&str> = line.split(',').collect();
    if parts.len() != n {
        return Err(Error::Parse(format!(
            "line {lineno}: expected {n} fields, found {}",
            parts.len()
        )));
    }
    Ok(parts)
}

pub fn instance_to_string(instance: &Instance) -> String {
    let mut out = format!(
        "{INSTANCE_TAG},{},{}",
        instance.num_vms(),
        instance.ps_types.len()
    );
    for c in &instance.ps_availability {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for t in &instance.ps_types {
        let c = t.capacity;
        let _ = writeln!(
            out,
            "{PS_TAG},{},{},{},{},{},{}",
            t.type_id, t.name, c.cpu, c.ram, c.disk, t.cost
        );
    }
    for (i, vm) in instance.vms.iter().enumerate() {
        let d = vm.demand;
        let _ = writeln!(out, "{i},{},{},{},{}", vm.type_id, d.cpu, d.ram, d.disk);
    }
    out
}

pub fn parse_instance(text: &str) -> Result<Instance> {
    let mut lines = content_lines(text);
    let (ln, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty instance file".into()))?;
    let head: Vec<&str> = header.split(',').collect();
    if head.first() != Some(&INSTANCE_TAG) || head.len() < 3 {
        return Err(Error::Parse(format!(
            "line {ln}: expected header starting with `{INSTANCE_TAG},V,L`"
        )));
    }
    let num_vms: usize = field(head[1], "vm count", ln)?;
    let num_types: usize = field(head[2], "server type count", ln)?;
    if head.len() != 3 + num_types {
        return Err(Error::Parse(format!(
            "line {ln}: header lists {} counts for {num_types} types",
            head.len() - 3
        )));
    }
    let availability = head[3..]
        .iter()
        .map(|c| field(c, "server count", ln))
        .collect::<Result<Vec<u32>>>()?;

    let mut ps_types = Vec::with_capacity(num_types);
    let mut vms = Vec::with_capacity(num_vms.min(1 << 20));
    for (ln, line) in lines {
        if ps_types.len() < num_types {
            let p = expect_fields(line, 7, ln)?;
            if p[0] != PS_TAG {
                return Err(Error::Parse(format!(
                    "line {ln}: expected a `{PS_TAG}` line"
                )));
            }
            let capacity = Resources::new(
                field(p[3], "cpu", ln)?,
                field(p[4], "ram", ln)?,
                field(p[5], "disk", ln)?,
            );
            let cost: Cost = field(p[6], "cost", ln)?;
            ps_types.push(PsType::new(
                field(p[1], "type id", ln)?,
                p[2],
                capacity,
                cost,
            )?);
            continue;
        }
        let p = expect_fields(line, 5, ln)?;
        let idx: usize = field(p[0], "vm index", ln)?;
        if idx != vms.len() {
            return Err(Error::Parse(format!(
                "line {ln}: vm index {idx} out of sequence, expected {}",
                vms.len()
            )));
        }
        let demand = Resources::new(
            field(p[2], "cpu", ln)?,
            field(p[3], "ram", ln)?,
            field(p[4], "disk", ln)?,
        );
        vms.push(VmType {
            type_id: field(p[1], "vm type id", ln)?,
            demand,
        });
    }
    if ps_types.len() != num_types {
        return Err(Error::Parse(format!(
            "expected {num_types} server types, found {}",
            ps_types.len()
        )));
    }
    if vms.len() != num_vms {
        return Err(Error::Parse(format!(
            "header announces {num_vms} VMs, file has {}",
            vms.len()
        )));
    }
    Instance::new(vms, ps_types, availability)
}

/// Hex prefix of the SHA-256 of the canonical instance text.
pub fn instance_hash(instance: &Instance) -> String {
    let digest = Sha256::digest(instance_to_string(instance).as_bytes());
    format!("{digest:x}")[..16].to_string()
}

/// A placement together with the provenance recorded in its file header.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementFile {
    pub instance_hash: String,
    pub solver: String,
    pub seed: u64,
    pub placement: Placement,
}

pub fn placement_to_string(
    instance: &Instance,
    solver: &str,
    seed: u64,
    placement: &Placement,
) -> String {
    let mut out = format!(
        "{PLACEMENT_TAG},{},{solver},{seed}\n",
        instance_hash(instance)
    );
    for (k, s) in placement.servers.iter().enumerate() {
        let vms: Vec<String> = s.vms.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(
            out,
            "{k},{},{}",
            instance.ps_types[s.ps_index].type_id,
            vms.join(";")
        );
    }
    out
}

/// Parses a placement file for `instance`. Fails if the file was written for a
/// different instance. Capacity and coverage are not checked here; see [`verify`].
pub fn parse_placement(text: &str, instance: &Instance) -> Result<PlacementFile> {
    let mut lines = content_lines(text);
    let (ln, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty placement file".into()))?;
    let head = expect_fields(header, 4, ln)?;
    if head[0] != PLACEMENT_TAG {
        return Err(Error::Parse(format!(
            "line {ln}: expected header starting with `{PLACEMENT_TAG}`"
        )));
    }
    let expected = instance_hash(instance);
    if head[1] != expected {
        return Err(Error::Parse(format!(
            "placement was written for instance {} but this instance hashes to {expected}",
            head[1]
        )));
    }
    let seed = field(head[3], "seed", ln)?;

    let mut seen = vec![false; instance.num_vms()];
    let mut servers = Vec::new();
    for (ln, line) in lines {
        let p = expect_fields(line, 3, ln)?;
        let idx: usize = field(p[0], "server index", ln)?;
        if idx != servers.len() {
            return Err(Error::Parse(format!(
                "line {ln}: server index {idx} out of sequence"
            )));
        }
        let type_id: u16 = field(p[1], "server type id", ln)?;
        let ps_index = instance
            .ps_index(type_id)
            .ok_or_else(|| Error::Parse(format!("line {ln}: unknown server type {type_id}")))?;
        let mut server = ActivatedPs::empty(ps_index, &instance.ps_types[ps_index]);
        for raw in p[2].split(';').filter(|s| !s.trim().is_empty()) {
            let vm: usize = field(raw, "vm index", ln)?;
            match seen.get_mut(vm) {
                None => return Err(Error::Parse(format!("line {ln}: vm {vm} does not exist"))),
                Some(true) => return Err(Error::Parse(format!("line {ln}: vm {vm} listed twice"))),
                Some(s) => *s = true,
            }
            server.push(vm, instance.vms[vm].demand);
        }
        servers.push(server);
    }
    Ok(PlacementFile {
        instance_hash: expected,
        solver: head[2].to_string(),
        seed,
        placement: Placement::new(servers),
    })
}

/// Parses a placement and checks it is a complete, feasible placement of `instance`.
pub fn verify(text: &str, instance: &Instance) -> Result<PlacementFile> {
    let file = parse_placement(text, instance)?;
    file.placement.check(instance, true)?;
    Ok(file)
}

pub fn read_instance(path: &Path) -> Result<Instance> {
    parse_instance(&std::fs::read_to_string(path)?)
}

/// Writes every `(path, contents)` pair through temporary files in the target
/// directories and only renames them into place once all writes succeeded.
pub fn write_all_atomic(files: &[(&Path, &[u8])]) -> Result<()> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, contents) in files {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(contents)?;
        tmp.as_file().sync_all()?;
        staged.push((tmp, *path));
    }
    for (tmp, path) in staged {
        tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    }
    Ok(())
}
