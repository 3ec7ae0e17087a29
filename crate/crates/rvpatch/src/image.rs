//! Code ingestion and patched-image output.
//!
//! Input is either the executable section of an ELF64 object or a raw
//! instruction blob with a declared base address. Output is the patched
//! text bytes plus a sidecar metadata document describing runtime blob
//! placement; the original container is never rewritten as a valid ELF.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("input is not an ELF file")]
    NotElf,
    #[error("ELF class is not 64-bit")]
    WrongClass,
    #[error("ELF data encoding is not little-endian")]
    WrongEndian,
    #[error("no executable section found")]
    NoExecutableSection,
    #[error("ELF file truncated while reading {what}")]
    Truncated { what: &'static str },
    #[error("base address {base:#x} is not 2-byte aligned")]
    MisalignedBase { base: u64 },
    #[error("image is empty")]
    Empty,
    #[error("image length {len} is odd")]
    OddLength { len: usize },
    #[error("patch region [{start:#x}, +{len}) outside image")]
    PatchOutOfBounds { start: u64, len: u64 },
    #[error("patch regions overlap at {addr:#x}")]
    OverlappingPatches { addr: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImageOrigin {
    ElfText,
    Raw,
}

/// A contiguous run of code at a virtual address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeImage {
    pub base: u64,
    pub bytes: Vec<u8>,
    pub origin: ImageOrigin,
    pub section_name: Option<String>,
}

impl CodeImage {
    pub fn end(&self) -> u64 {
        self.base + self.bytes.len() as u64
    }

    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.base && addr < self.end()
    }
}

/// Wrap a raw blob as a code image.
pub fn load_raw(bytes: Vec<u8>, base: u64) -> Result<CodeImage, ImageError> {
    if !base.is_multiple_of(2) {
        return Err(ImageError::MisalignedBase { base });
    }
    if bytes.is_empty() {
        return Err(ImageError::Empty);
    }
    if !bytes.len().is_multiple_of(2) {
        return Err(ImageError::OddLength { len: bytes.len() });
    }
    Ok(CodeImage {
        base,
        bytes,
        origin: ImageOrigin::Raw,
        section_name: None,
    })
}

const SHF_EXECINSTR: u64 = 0x4;

fn u16le(b: &[u8], off: usize) -> Result<u16, ImageError> {
    b.get(off..off + 2)
        .map(|s| u16::from_le_bytes([s[0], s[1]]))
        .ok_or(ImageError::Truncated { what: "header" })
}

fn u32le(b: &[u8], off: usize) -> Result<u32, ImageError> {
    b.get(off..off + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or(ImageError::Truncated { what: "header" })
}

fn u64le(b: &[u8], off: usize) -> Result<u64, ImageError> {
    b.get(off..off + 8)
        .map(|s| u64::from_le_bytes([s[0], s[1], s[2], s[3], s[4], s[5], s[6], s[7]]))
        .ok_or(ImageError::Truncated { what: "header" })
}

struct Section {
    name: String,
    flags: u64,
    addr: u64,
    offset: u64,
    size: u64,
}

/// Extract the `.text` section (or the first executable section) of an
/// ELF64 little-endian object.
pub fn load_elf_text(file: &[u8]) -> Result<CodeImage, ImageError> {
    if file.len() < 4 || &file[0..4] != b"\x7fELF" {
        return Err(ImageError::NotElf);
    }
    if file.len() < 64 {
        return Err(ImageError::Truncated { what: "ELF header" });
    }
    if file[4] != 2 {
        return Err(ImageError::WrongClass);
    }
    if file[5] != 1 {
        return Err(ImageError::WrongEndian);
    }
    let shoff = u64le(file, 0x28)? as usize;
    let shentsize = u16le(file, 0x3a)? as usize;
    let shnum = u16le(file, 0x3c)? as usize;
    let shstrndx = u16le(file, 0x3e)? as usize;

    let mut sections = Vec::with_capacity(shnum);
    for i in 0..shnum {
        let off = shoff + i * shentsize;
        if off + 64 > file.len() {
            return Err(ImageError::Truncated {
                what: "section headers",
            });
        }
        sections.push((
            u32le(file, off)?,        // sh_name
            u64le(file, off + 0x08)?, // sh_flags
            u64le(file, off + 0x10)?, // sh_addr
            u64le(file, off + 0x18)?, // sh_offset
            u64le(file, off + 0x20)?, // sh_size
        ));
    }

    let strtab: &[u8] = if shstrndx < sections.len() {
        let (_, _, _, off, size) = sections[shstrndx];
        file.get(off as usize..(off + size) as usize).unwrap_or(&[])
    } else {
        &[]
    };
    let name_of = |idx: u32| -> String {
        let start = idx as usize;
        let end = strtab[start.min(strtab.len())..]
            .iter()
            .position(|&b| b == 0)
            .map(|p| start + p)
            .unwrap_or(strtab.len());
        String::from_utf8_lossy(&strtab[start.min(strtab.len())..end]).into_owned()
    };

    let sections: Vec<Section> = sections
        .into_iter()
        .map(|(name, flags, addr, offset, size)| Section {
            name: name_of(name),
            flags,
            addr,
            offset,
            size,
        })
        .collect();

    let chosen = sections
        .iter()
        .find(|s| s.name == ".text" && s.flags & SHF_EXECINSTR != 0)
        .or_else(|| sections.iter().find(|s| s.flags & SHF_EXECINSTR != 0))
        .ok_or(ImageError::NoExecutableSection)?;

    let bytes = file
        .get(chosen.offset as usize..(chosen.offset + chosen.size) as usize)
        .ok_or(ImageError::Truncated {
            what: "section contents",
        })?
        .to_vec();
    if chosen.addr % 2 != 0 {
        return Err(ImageError::MisalignedBase { base: chosen.addr });
    }
    if bytes.is_empty() {
        return Err(ImageError::Empty);
    }
    if bytes.len() % 2 != 0 {
        return Err(ImageError::OddLength { len: bytes.len() });
    }
    Ok(CodeImage {
        base: chosen.addr,
        bytes,
        origin: ImageOrigin::ElfText,
        section_name: Some(chosen.name.clone()),
    })
}

/// A (region_start, patch bytes) overlay.
pub type PatchOverlay<'a> = (u64, &'a [u8]);

/// Overlay the patch regions onto the original text. Bytes outside the
/// regions are untouched; overlapping or out-of-bounds regions are
/// internal-consistency errors.
pub fn write_patched_text(
    original: &CodeImage,
    overlays: &[PatchOverlay<'_>],
) -> Result<Vec<u8>, ImageError> {
    let mut out = original.bytes.clone();
    let mut touched = vec![false; out.len()];
    for (start, bytes) in overlays {
        let len = bytes.len() as u64;
        if *start < original.base || start + len > original.end() {
            return Err(ImageError::PatchOutOfBounds { start: *start, len });
        }
        let off = (start - original.base) as usize;
        for (i, b) in bytes.iter().enumerate() {
            if touched[off + i] {
                return Err(ImageError::OverlappingPatches {
                    addr: start + i as u64,
                });
            }
            touched[off + i] = true;
            out[off + i] = *b;
        }
    }
    Ok(out)
}

/// Placement record for one runtime blob in the sidecar metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobPlacement {
    pub address: u64,
    pub length: u64,
}

/// Fixture builder: a minimal ELF64 with the given sections, used by
/// tests and for generating self-contained demo inputs.
pub fn synthesize_elf(sections: &[(&str, u64, u64, &[u8])]) -> Vec<u8> {
    // Layout: ehdr | section bodies | shstrtab | section headers.
    let mut strtab = vec![0u8];
    let mut name_offsets = Vec::new();
    for (name, _, _, _) in sections {
        name_offsets.push(strtab.len() as u32);
        strtab.extend_from_slice(name.as_bytes());
        strtab.push(0);
    }
    let shstrtab_name = strtab.len() as u32;
    strtab.extend_from_slice(b".shstrtab\0");

    let mut out = vec![0u8; 64];
    out[0..4].copy_from_slice(b"\x7fELF");
    out[4] = 2; // ELFCLASS64
    out[5] = 1; // little-endian
    out[6] = 1; // EV_CURRENT
    out[16] = 2; // ET_EXEC
    out[18] = 0xf3; // EM_RISCV

    let mut body_offsets = Vec::new();
    for (_, _, _, bytes) in sections {
        body_offsets.push(out.len() as u64);
        out.extend_from_slice(bytes);
    }
    let strtab_offset = out.len() as u64;
    out.extend_from_slice(&strtab);
    while !out.len().is_multiple_of(8) {
        out.push(0);
    }
    let shoff = out.len() as u64;

    let push_shdr = |name: u32, sh_type: u32, flags: u64, addr: u64, off: u64, size: u64| {
        let mut h = [0u8; 64];
        h[0..4].copy_from_slice(&name.to_le_bytes());
        h[4..8].copy_from_slice(&sh_type.to_le_bytes());
        h[8..16].copy_from_slice(&flags.to_le_bytes());
        h[16..24].copy_from_slice(&addr.to_le_bytes());
        h[24..32].copy_from_slice(&off.to_le_bytes());
        h[32..40].copy_from_slice(&size.to_le_bytes());
        h
    };
    let mut headers = Vec::new();
    headers.push(push_shdr(0, 0, 0, 0, 0, 0)); // SHT_NULL
    for (i, (_, flags, addr, bytes)) in sections.iter().enumerate() {
        headers.push(push_shdr(
            name_offsets[i],
            1, // SHT_PROGBITS
            *flags,
            *addr,
            body_offsets[i],
            bytes.len() as u64,
        ));
    }
    headers.push(push_shdr(
        shstrtab_name,
        3, // SHT_STRTAB
        0,
        0,
        strtab_offset,
        strtab.len() as u64,
    ));
    for h in &headers {
        out.extend_from_slice(h);
    }

    let shnum = headers.len() as u16;
    let shstrndx = (headers.len() - 1) as u16;
    out[0x28..0x30].copy_from_slice(&shoff.to_le_bytes());
    out[0x3a..0x3c].copy_from_slice(&64u16.to_le_bytes());
    out[0x3c..0x3e].copy_from_slice(&shnum.to_le_bytes());
    out[0x3e..0x40].copy_from_slice(&shstrndx.to_le_bytes());
    out
}
